"""CSV and JSON round trips, format validation, atomic writes."""

import numpy as np
import pytest

from homdip import (
    CountRecord,
    DipPattern,
    FileFormatError,
    IntensitySpectrum,
    PhaseSpectrum,
    read_counts,
    read_dip,
    read_json,
    read_phase,
    read_spectrum,
    write_counts,
    write_dip,
    write_json,
    write_phase,
    write_spectrum,
)

TWO_PI = 2.0 * np.pi


def bytes_of(path):
    with open(path, "rb") as handle:
        return handle.read()


class TestSpectrumRoundTrip:
    def test_round_trip(self, tmp_path, telecom_grid):
        # data column is bit-exact; the grid axis is rebuilt from the header
        # columns, so it round-trips to 1e-12 relative rather than bitwise
        rng = np.random.default_rng(0)
        spec = IntensitySpectrum(telecom_grid, rng.uniform(0.0, 1.0, telecom_grid.count))
        p = tmp_path / "a.csv"
        write_spectrum(str(p), spec)
        back = read_spectrum(str(p))
        np.testing.assert_array_equal(back.values, spec.values)
        np.testing.assert_allclose(
            back.grid.frequencies, telecom_grid.frequencies, rtol=1e-12
        )
        assert back.grid.count == telecom_grid.count

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileFormatError):
            read_spectrum(str(tmp_path / "nope.csv"))

    def test_missing_column(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("freq_thz,foo\n1.0,2.0\n")
        with pytest.raises(FileFormatError):
            read_spectrum(str(p))

    def test_nonuniform_grid_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        freqs = np.linspace(193.0, 193.4, 8)
        freqs[3] += 0.01
        rows = "\n".join(f"{f},1.0" for f in freqs)
        p.write_text("freq_thz,intensity\n" + rows + "\n")
        with pytest.raises(FileFormatError):
            read_spectrum(str(p))

    def test_non_power_of_two_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        freqs = np.linspace(193.0, 193.4, 12)
        rows = "\n".join(f"{f},1.0" for f in freqs)
        p.write_text("freq_thz,intensity\n" + rows + "\n")
        with pytest.raises(FileFormatError):
            read_spectrum(str(p))

    def test_garbage_value_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("freq_thz,intensity\n1.0,banana\n")
        with pytest.raises(FileFormatError):
            read_spectrum(str(p))


class TestPhaseRoundTrip:
    def test_round_trip(self, tmp_path, small_grid):
        rng = np.random.default_rng(1)
        psd = PhaseSpectrum(small_grid, rng.normal(size=small_grid.count))
        p = tmp_path / "a.csv"
        write_phase(str(p), psd)
        back = read_phase(str(p))
        np.testing.assert_array_equal(back.values, psd.values)
        np.testing.assert_allclose(
            back.grid.frequencies,
            small_grid.frequencies,
            rtol=1e-12,
            atol=1e-9 * small_grid.spacing,  # this grid crosses zero frequency
        )


class TestDipRoundTrip:
    def test_round_trip_with_errors(self, tmp_path):
        delays = np.arange(-8, 9) * 1.25e-12
        nc = 1.0 - 0.5 * np.exp(-(delays**2) / (2 * (3e-12) ** 2))
        se = np.full(delays.size, 0.003)
        dip = DipPattern(delays, nc, se)
        p = tmp_path / "a.csv"
        write_dip(str(p), dip)
        back = read_dip(str(p))
        # the ps <-> s unit conversion costs at most one ulp on the delays
        np.testing.assert_allclose(back.delays, delays, rtol=1e-15)
        np.testing.assert_array_equal(back.nc_values, nc)
        np.testing.assert_array_equal(back.std_errors, se)

    def test_noiseless_dip_reads_back_without_errors(self, tmp_path):
        # all-zero stderr column means "no error information"
        delays = np.arange(-8, 9) * 1.0e-12
        dip = DipPattern(delays, np.ones(delays.size))
        p = tmp_path / "a.csv"
        write_dip(str(p), dip)
        back = read_dip(str(p))
        assert back.std_errors is None

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileFormatError):
            read_dip(str(tmp_path / "nope.csv"))


class TestCountsRoundTrip:
    def test_bit_exact_round_trip(self, tmp_path):
        delays = np.arange(-4, 5) * 1.25e-12
        rng = np.random.default_rng(2)
        record = CountRecord(
            delays,
            rng.integers(900, 1100, delays.size),
            rng.integers(900, 1100, delays.size),
            rng.integers(400, 600, delays.size),
            512,
        )
        p1 = tmp_path / "a.csv"
        p2 = tmp_path / "b.csv"
        write_counts(str(p1), record)
        back = read_counts(str(p1))
        write_counts(str(p2), back)
        assert bytes_of(p1) == bytes_of(p2)
        np.testing.assert_array_equal(back.coincidences, record.coincidences)
        assert back.baseline_coincidences == 512

    def test_inconsistent_baseline_column_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text(
            "delay_ps,counts_a,counts_b,coincidences,baseline\n"
            "0.0,10,10,5,100\n"
            "1.0,10,10,5,200\n"
        )
        with pytest.raises(FileFormatError):
            read_counts(str(p))


class TestJson:
    def test_round_trip(self, tmp_path):
        payload = {"b": [1, 2, 3], "a": {"x": 1.5}}
        p = tmp_path / "a.json"
        write_json(str(p), payload)
        assert read_json(str(p)) == payload

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(FileFormatError):
            read_json(str(p))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileFormatError):
            read_json(str(tmp_path / "nope.json"))


class TestAtomicity:
    def test_no_partial_file_on_write_error(self, tmp_path, small_grid):
        # writing into a nonexistent directory must not leave any file behind
        psd = PhaseSpectrum(small_grid, np.zeros(small_grid.count))
        target = tmp_path / "missing_dir" / "a.csv"
        with pytest.raises(OSError):
            write_phase(str(target), psd)
        assert not target.exists()

    def test_no_leftover_temp_files(self, tmp_path, small_grid):
        psd = PhaseSpectrum(small_grid, np.zeros(small_grid.count))
        write_phase(str(tmp_path / "a.csv"), psd)
        leftovers = [p for p in tmp_path.iterdir() if p.suffix == ".tmp"]
        assert leftovers == []
