"""Preset phase spectrum difference generators.

Each generator returns a PhaseSpectrum on a given frequency grid. The
inverted-n preset is the piecewise-linear down-up-down shape used for
structured test phases; an optional Gaussian smoothing width rounds its kinks,
mimicking the finite resolution of a programmable spectral filter.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .forward import PhaseSpectrum
from .grids import FrequencyGrid

PRESET_NAMES = ("flat", "linear", "quadratic", "inverted-n", "custom-table")


def flat(grid: FrequencyGrid) -> PhaseSpectrum:
    """Identically zero phase."""
    return PhaseSpectrum(grid, np.zeros(grid.count))


def linear(grid: FrequencyGrid, slope: float, center: float | None = None) -> PhaseSpectrum:
    """slope * (w - center); pure delay, removed entirely by detrending."""
    w0 = grid.center if center is None else center
    return PhaseSpectrum(grid, slope * (grid.frequencies - w0))


def quadratic(
    grid: FrequencyGrid, curvature: float, center: float | None = None
) -> PhaseSpectrum:
    """0.5 * curvature * (w - center)^2, the group-delay-dispersion shape."""
    w0 = grid.center if center is None else center
    return PhaseSpectrum(grid, 0.5 * curvature * (grid.frequencies - w0) ** 2)


def inverted_n(
    grid: FrequencyGrid,
    amplitude: float,
    halfwidth: float,
    center: float | None = None,
    smoothing: float = 0.0,
) -> PhaseSpectrum:
    """Piecewise-linear down-up-down phase over [center-halfwidth, center+halfwidth].

    Nodes sit at center + (-1, -1/3, 1/3, 1) * halfwidth with values
    (+a, -a, +a, -a); the curve is clamped to the edge values outside the band.
    `smoothing` is a Gaussian width (rad/s) applied to round the kinks; 0
    keeps the sharp piecewise-linear shape.
    """
    if not (halfwidth > 0):
        raise ValueError("halfwidth must be positive")
    if smoothing < 0:
        raise ValueError("smoothing must be nonnegative")
    w0 = grid.center if center is None else center
    nodes = w0 + np.array([-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0]) * halfwidth
    values = amplitude * np.array([1.0, -1.0, 1.0, -1.0])
    out = np.interp(grid.frequencies, nodes, values)
    if smoothing > 0:
        out = gaussian_filter1d(out, smoothing / grid.spacing, mode="nearest")
    return PhaseSpectrum(grid, out)


def custom_table(
    grid: FrequencyGrid, freqs: np.ndarray, phases: np.ndarray
) -> PhaseSpectrum:
    """Linear interpolation of tabulated (frequency, phase) points onto the grid."""
    freqs = np.asarray(freqs, dtype=float)
    phases = np.asarray(phases, dtype=float)
    if freqs.ndim != 1 or freqs.shape != phases.shape or freqs.size < 2:
        raise ValueError("need matching 1-d tables with at least two points")
    if np.any(np.diff(freqs) <= 0):
        raise ValueError("table frequencies must be strictly increasing")
    return PhaseSpectrum(grid, np.interp(grid.frequencies, freqs, phases))
