"""CSV and JSON persistence for spectra, phases, dips, and count records.

Column conventions: frequencies in THz (ordinary frequency, converted to
angular rad/s internally via w = 2 pi 1e12 f), delays in picoseconds. Floats
are written with 17 significant digits so every file round-trips through its
reader bit-exactly. All writes go through a temp-file rename, so a crashed
run never leaves a half-written artifact.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from typing import Optional, Sequence

import numpy as np

from .detector import CountRecord
from .forward import DipPattern, IntensitySpectrum, PhaseSpectrum
from .grids import FrequencyGrid

TWO_PI = 2.0 * np.pi
THZ = TWO_PI * 1e12  # rad/s per THz
PS = 1e-12


class FileFormatError(ValueError):
    """Input file missing, malformed, or inconsistent with the format."""


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def write_table(path: str, header: Sequence[str], columns: Sequence[np.ndarray]) -> None:
    """Write named columns as CSV (atomically)."""
    columns = [np.asarray(c) for c in columns]
    if len(columns) != len(header):
        raise ValueError("one column per header field required")
    n = columns[0].shape[0]
    if any(c.shape != (n,) for c in columns):
        raise ValueError("columns must be 1-d and equal length")
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    for i in range(n):
        writer.writerow([_fmt(float(c[i])) for c in columns])
    _atomic_write(path, buf.getvalue())


def _read_table(path: str, required: Sequence[str]) -> dict[str, np.ndarray]:
    if not os.path.exists(path):
        raise FileFormatError(f"{path}: file not found")
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise FileFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for name in required:
            if name not in header:
                raise FileFormatError(f"{path}: missing column {name!r} in {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise FileFormatError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise FileFormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise FileFormatError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=float)
    return {name: data[:, i] for i, name in enumerate(header)}


def _grid_from_thz(path: str, freq_thz: np.ndarray) -> FrequencyGrid:
    omega = freq_thz * THZ
    n = omega.size
    if n < 8:
        raise FileFormatError(f"{path}: need at least 8 frequency samples, got {n}")
    steps = np.diff(omega)
    spacing = float(np.mean(steps))
    if spacing <= 0 or np.any(np.abs(steps - spacing) > 1e-6 * abs(spacing)):
        raise FileFormatError(f"{path}: frequency samples must be uniformly increasing")
    try:
        return FrequencyGrid(center=float(omega[n // 2]), spacing=spacing, count=n)
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from None


# --- spectra and phases -----------------------------------------------------


def write_spectrum(path: str, spectrum: IntensitySpectrum) -> None:
    write_table(
        path,
        ["freq_thz", "intensity"],
        [spectrum.grid.frequencies / THZ, spectrum.values],
    )


def read_spectrum(path: str) -> IntensitySpectrum:
    data = _read_table(path, ["freq_thz", "intensity"])
    grid = _grid_from_thz(path, data["freq_thz"])
    try:
        return IntensitySpectrum(grid, data["intensity"])
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from None


def write_phase(path: str, psd: PhaseSpectrum) -> None:
    write_table(
        path, ["freq_thz", "phase_rad"], [psd.grid.frequencies / THZ, psd.values]
    )


def read_phase(path: str) -> PhaseSpectrum:
    data = _read_table(path, ["freq_thz", "phase_rad"])
    grid = _grid_from_thz(path, data["freq_thz"])
    try:
        return PhaseSpectrum(grid, data["phase_rad"])
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from None


# --- dips and count records -------------------------------------------------


def write_dip(path: str, dip: DipPattern, record: Optional[CountRecord] = None) -> None:
    """Dip CSV `delay_ps,nc,stderr`, plus raw count columns when given."""
    stderr = dip.std_errors if dip.std_errors is not None else np.zeros(dip.delays.size)
    header = ["delay_ps", "nc", "stderr"]
    columns = [dip.delays / PS, dip.nc_values, stderr]
    if record is not None:
        if record.delays.shape != dip.delays.shape or np.any(record.delays != dip.delays):
            raise ValueError("count record delays differ from the dip delays")
        header += ["counts_a", "counts_b", "coincidences"]
        columns += [record.counts_a, record.counts_b, record.coincidences]
    write_table(path, header, columns)


def read_dip(path: str) -> DipPattern:
    data = _read_table(path, ["delay_ps", "nc"])
    stderr = data.get("stderr")
    if stderr is not None and not np.any(stderr > 0):
        stderr = None  # noiseless file; no error information
    try:
        return DipPattern(data["delay_ps"] * PS, data["nc"], stderr)
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from None


def write_counts(path: str, record: CountRecord) -> None:
    """Raw counts CSV with the scalar baseline in a trailing `baseline` column."""
    baseline = np.full(record.delays.size, record.baseline_coincidences)
    write_table(
        path,
        ["delay_ps", "counts_a", "counts_b", "coincidences", "baseline"],
        [record.delays / PS, record.counts_a, record.counts_b, record.coincidences, baseline],
    )


def read_counts(path: str) -> CountRecord:
    data = _read_table(
        path, ["delay_ps", "counts_a", "counts_b", "coincidences", "baseline"]
    )
    baseline = data["baseline"]
    if np.any(baseline != baseline[0]):
        raise FileFormatError(f"{path}: baseline column must be constant")
    try:
        return CountRecord(
            data["delay_ps"] * PS,
            data["counts_a"].astype(np.int64),
            data["counts_b"].astype(np.int64),
            data["coincidences"].astype(np.int64),
            int(baseline[0]),
        )
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from None


# --- JSON -------------------------------------------------------------------


def write_json(path: str, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_json(path: str) -> dict:
    if not os.path.exists(path):
        raise FileFormatError(f"{path}: file not found")
    try:
        with open(path) as handle:
            payload = json.load(handle)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(payload, dict):
        raise FileFormatError(f"{path}: expected a JSON object")
    return payload
