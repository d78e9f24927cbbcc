"""Monte Carlo ensembles: reproducibility, coverage, and export tables."""

from dataclasses import replace

import numpy as np
import pytest

from homdip import (
    EnsembleSpec,
    PhaseDistribution,
    PhaseSpectrum,
    coverage_statistic,
    detrend,
    export_heatmap,
    published_scenario,
    run_ensemble,
)
from homdip.ensemble import HISTOGRAM_BIN_WIDTH, _phase_bin_edges
from homdip.retrieval import RetrievalConfig

TWO_PI = 2.0 * np.pi


def quick_spec(n_runs=3, duration=90.0, base_seed=0, grid_count=256):
    """Published scenario shrunk to a fast configuration for ensemble tests."""
    spec = published_scenario(grid_count=grid_count)
    cfg = RetrievalConfig(restarts=2, basin_hops=4, gs_iterations=150,
                          gp_iterations=50, adapted_iterations=25)
    return replace(
        spec,
        retrieval=cfg,
        n_runs=n_runs,
        base_seed=base_seed,
        budget=replace(spec.budget, duration_per_point=duration),
    )


def hand_distribution(grid, samples):
    """PhaseDistribution assembled directly from a sample matrix."""
    samples = np.asarray(samples, dtype=float)
    edges = _phase_bin_edges()
    clipped = np.clip(samples, edges[0], np.nextafter(edges[-1], -np.inf))
    histogram = np.empty((grid.count, edges.size - 1), dtype=np.int64)
    for i in range(grid.count):
        histogram[i], _ = np.histogram(clipped[:, i], bins=edges)
    quantiles = np.quantile(samples, [0.05, 0.50, 0.95], axis=0)
    return PhaseDistribution(
        grid=grid,
        samples=samples,
        histogram=histogram,
        bin_edges=edges,
        quantiles=quantiles,
        failed_runs=(),
        engine_flip_matches=samples.shape[0],
    )


class TestPublishedScenario:
    def test_configuration_values(self):
        # [PAPER] published measurement configuration
        spec = published_scenario()
        grid = spec.scenario.grid
        assert grid.count == 512
        assert grid.center == pytest.approx(TWO_PI * 193.19e12)
        assert grid.count * grid.spacing == pytest.approx(TWO_PI * 0.8e12)
        assert spec.budget.repetition_rate == 36.88e6
        assert spec.budget.single_rate_target == 1.3e6
        assert spec.budget.duration_per_point == 90.0
        assert spec.scenario.combo.visibility_factor == pytest.approx(0.5)
        lo, hi = spec.band
        assert lo == pytest.approx(TWO_PI * 193.13e12)
        assert hi == pytest.approx(TWO_PI * 193.25e12)

    def test_delay_comb(self):
        # core spacing equals the conjugate lattice spacing 1.25 ps
        spec = published_scenario()
        delays = spec.scenario.delays
        assert np.all(np.diff(delays) > 0)
        core = delays[np.abs(delays) <= 22.6e-12]
        np.testing.assert_allclose(np.diff(core), 1.25e-12, rtol=1e-9)
        assert delays.max() == pytest.approx(60e-12)

    def test_grid_count_independent_delay_spacing(self):
        # dtau = 2 pi / span does not depend on the grid count
        d256 = published_scenario(grid_count=256).scenario.delays
        d512 = published_scenario(grid_count=512).scenario.delays
        np.testing.assert_allclose(d256, d512)


class TestRunEnsemble:
    def test_bit_identical_reproducibility(self):
        spec = quick_spec(n_runs=3)
        d1 = run_ensemble(spec)
        d2 = run_ensemble(spec)
        np.testing.assert_array_equal(d1.samples, d2.samples)
        np.testing.assert_array_equal(d1.histogram, d2.histogram)
        np.testing.assert_array_equal(d1.quantiles, d2.quantiles)
        assert d1.failed_runs == d2.failed_runs
        assert d1.engine_flip_matches == d2.engine_flip_matches

    def test_worker_count_does_not_change_results(self):
        spec = quick_spec(n_runs=3, base_seed=5)
        serial = run_ensemble(spec, workers=1)
        parallel = run_ensemble(spec, workers=2)
        np.testing.assert_array_equal(serial.samples, parallel.samples)
        assert serial.failed_runs == parallel.failed_runs

    def test_near_noiseless_runs_track_truth(self):
        # [DERIVED] a 1000x counting budget leaves only the algorithmic floor
        spec = quick_spec(n_runs=2, duration=90000.0)
        dist = run_ensemble(spec)
        g_mag = spec.scenario.correlation_magnitude()
        truth_d = detrend(spec.scenario.truth, g_mag)
        cov = coverage_statistic(dist, truth_d, 0.25, spec.band)
        assert cov == 1.0
        # runs keep independent retrieval seeds, so even noiseless rounds
        # agree only to the multi-start scatter, not to machine precision
        w = np.where(g_mag >= 0.1 * g_mag.max(), g_mag, 0.0)
        d = dist.samples[0] - dist.samples[1]
        assert np.sqrt(np.sum(w * d**2) / np.sum(w)) < 0.1

    def test_failed_run_recorded_and_excluded(self, monkeypatch):
        import homdip.ensemble as ens

        real = ens._single_run

        def flaky(spec, true_dip, g_mag, run_index):
            if run_index == 1:
                raise RuntimeError("injected failure")
            return real(spec, true_dip, g_mag, run_index)

        monkeypatch.setattr(ens, "_single_run", flaky)
        dist = run_ensemble(quick_spec(n_runs=3))
        assert dist.failed_runs == (1,)
        assert dist.n_runs == 2

    def test_all_runs_failed_raises(self, monkeypatch):
        import homdip.ensemble as ens

        def broken(spec, true_dip, g_mag, run_index):
            raise RuntimeError("injected failure")

        monkeypatch.setattr(ens, "_single_run", broken)
        with pytest.raises(RuntimeError):
            run_ensemble(quick_spec(n_runs=2))

    def test_shorter_integration_widens_spread(self):
        # [DERIVED] quartering the dwell time roughly doubles the phase noise
        n = 24
        wide = run_ensemble(quick_spec(n_runs=n, duration=22.5, base_seed=100))
        narrow = run_ensemble(quick_spec(n_runs=n, duration=90.0, base_seed=100))
        spec = quick_spec()
        freqs = spec.scenario.grid.frequencies
        sel = (freqs >= spec.band[0]) & (freqs <= spec.band[1])

        def band_spread(dist):
            return np.median(dist.quantiles[2, sel] - dist.quantiles[0, sel])

        ratio = band_spread(wide) / band_spread(narrow)
        assert 1.15 < ratio < 4.0

    def test_validation(self):
        spec = published_scenario()
        with pytest.raises(ValueError):
            replace(spec, n_runs=1)
        grid = spec.scenario.grid
        bad_band = (grid.frequencies[-1] + grid.spacing, grid.frequencies[-1] + 2 * grid.spacing)
        with pytest.raises(ValueError):
            replace(spec, band=bad_band)


class TestCoverageStatistic:
    def test_exact_fraction_on_hand_built_samples(self, small_grid):
        # [DERIVED] offsets chosen so the in-band fraction is exactly 3/4
        truth = PhaseSpectrum(small_grid, np.zeros(small_grid.count))
        offsets = np.array([0.05, -0.05, 0.08, 0.5])
        samples = np.tile(offsets[:, None], (1, small_grid.count))
        dist = hand_distribution(small_grid, samples)
        band = (small_grid.frequencies[0], small_grid.frequencies[-1])
        assert coverage_statistic(dist, truth, 0.1, band) == pytest.approx(0.75)

    def test_infinite_halfwidth_gives_one(self, small_grid):
        truth = PhaseSpectrum(small_grid, np.zeros(small_grid.count))
        rng = np.random.default_rng(0)
        dist = hand_distribution(small_grid, rng.normal(size=(6, small_grid.count)))
        band = (small_grid.frequencies[0], small_grid.frequencies[-1])
        assert coverage_statistic(dist, truth, np.inf, band) == 1.0

    def test_zero_halfwidth_on_noisy_samples(self, small_grid):
        truth = PhaseSpectrum(small_grid, np.zeros(small_grid.count))
        rng = np.random.default_rng(1)
        dist = hand_distribution(small_grid, rng.normal(size=(6, small_grid.count)))
        band = (small_grid.frequencies[0], small_grid.frequencies[-1])
        assert coverage_statistic(dist, truth, 0.0, band) == 0.0

    def test_monotone_in_halfwidth(self, small_grid):
        truth = PhaseSpectrum(small_grid, np.zeros(small_grid.count))
        rng = np.random.default_rng(2)
        dist = hand_distribution(small_grid, 0.2 * rng.normal(size=(10, small_grid.count)))
        band = (small_grid.frequencies[0], small_grid.frequencies[-1])
        covs = [coverage_statistic(dist, truth, h, band) for h in (0.05, 0.1, 0.2, 0.5)]
        assert covs == sorted(covs)

    def test_band_restricts_frequencies(self, small_grid):
        # out-of-band columns deviate wildly but must not count
        truth = PhaseSpectrum(small_grid, np.zeros(small_grid.count))
        samples = np.zeros((4, small_grid.count))
        samples[:, : small_grid.count // 2] = 3.0
        dist = hand_distribution(small_grid, samples)
        mid = small_grid.frequencies[small_grid.count // 2]
        assert coverage_statistic(dist, truth, 0.1, (mid, small_grid.frequencies[-1])) == 1.0

    def test_mismatched_grid_rejected(self, small_grid, telecom_grid):
        truth = PhaseSpectrum(telecom_grid, np.zeros(telecom_grid.count))
        dist = hand_distribution(small_grid, np.zeros((3, small_grid.count)))
        band = (small_grid.frequencies[0], small_grid.frequencies[-1])
        with pytest.raises(ValueError):
            coverage_statistic(dist, truth, 0.1, band)


class TestExportHeatmap:
    def test_counts_sum_to_runs_per_frequency(self, small_grid):
        rng = np.random.default_rng(3)
        n_runs = 7
        dist = hand_distribution(small_grid, rng.normal(size=(n_runs, small_grid.count)))
        heatmap, quantiles = export_heatmap(dist)
        n_bins = int(round(TWO_PI / HISTOGRAM_BIN_WIDTH))
        assert heatmap.shape == (small_grid.count * n_bins, 3)
        per_freq = heatmap[:, 2].reshape(small_grid.count, n_bins).sum(axis=1)
        np.testing.assert_array_equal(per_freq, n_runs)
        assert quantiles.shape == (small_grid.count, 4)

    def test_quantile_columns_match_numpy(self, small_grid):
        # [DERIVED] oracle = np.quantile on the raw samples
        rng = np.random.default_rng(4)
        samples = rng.normal(size=(9, small_grid.count))
        dist = hand_distribution(small_grid, samples)
        _, quantiles = export_heatmap(dist)
        expected = np.quantile(samples, [0.05, 0.50, 0.95], axis=0).T
        np.testing.assert_allclose(quantiles[:, 1:], expected, atol=1e-12)

    def test_frequencies_in_thz(self, small_grid):
        dist = hand_distribution(small_grid, np.zeros((3, small_grid.count)))
        _, quantiles = export_heatmap(dist)
        np.testing.assert_allclose(
            quantiles[:, 0], small_grid.frequencies / (TWO_PI * 1e12), rtol=1e-12
        )

    def test_band_restriction_and_empty_band(self, small_grid):
        dist = hand_distribution(small_grid, np.zeros((3, small_grid.count)))
        lo = small_grid.frequencies[10]
        hi = small_grid.frequencies[20]
        heatmap, quantiles = export_heatmap(dist, band=(lo, hi))
        assert quantiles.shape[0] == 11
        between = small_grid.frequencies[-1] + 0.1 * small_grid.spacing
        heatmap_e, quantiles_e = export_heatmap(dist, band=(between, between + 1.0))
        assert heatmap_e.shape[0] == 0
        assert quantiles_e.shape[0] == 0
