"""Forward model: from intensity spectra and a phase difference to a HOM dip.

The cross-spectral density g(w) has modulus sqrt(I1 I2) and argument equal to
the phase spectrum difference. Its transform G(tau) gives the mode matching
degree V(tau) = |G|^2, and the normalized coincidence rate is N_c = 1 - f*V
with a visibility factor f fixed by the incident-state combination.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .grids import ComplexSeries, FrequencyGrid, TimeGrid, _forward_values, conjugate_time_grid

SINGLE_SINGLE = "single-single"
SINGLE_COHERENT = "single-coherent"
COHERENT_COHERENT = "coherent-coherent"


@dataclass(frozen=True, eq=False)
class IntensitySpectrum:
    """Nonnegative real intensity samples on a frequency grid."""

    grid: FrequencyGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).copy()
        if vals.shape != (self.grid.count,):
            raise ValueError("intensity length does not match grid count")
        if not np.all(np.isfinite(vals)):
            raise ValueError("intensity values must be finite")
        if np.any(vals < 0):
            raise ValueError("intensity values must be nonnegative")
        if not np.any(vals > 0):
            raise ValueError("intensity must be nonzero somewhere")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def area(self) -> float:
        """dw * sum(I), the discrete area under the spectrum."""
        return float(self.grid.spacing * np.sum(self.values))

    def normalized(self) -> "IntensitySpectrum":
        """Unit-area copy (dw * sum(I) = 1)."""
        return IntensitySpectrum(self.grid, self.values / self.area)


@dataclass(frozen=True, eq=False)
class PhaseSpectrum:
    """Real phase samples (radians) on a frequency grid."""

    grid: FrequencyGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).copy()
        if vals.shape != (self.grid.count,):
            raise ValueError("phase length does not match grid count")
        if not np.all(np.isfinite(vals)):
            raise ValueError("phase values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class StateCombination:
    """Incident-state combination at the beam splitter.

    variant: one of "single-single", "single-coherent", "coherent-coherent".
    mag_a: relative magnitude |A| (single-coherent) or |A1| (coherent-coherent).
    mag_b: |A2| for coherent-coherent.
    """

    variant: str
    mag_a: float = 1.0
    mag_b: float = 1.0

    def __post_init__(self):
        if self.variant not in (SINGLE_SINGLE, SINGLE_COHERENT, COHERENT_COHERENT):
            raise ValueError(f"unknown state combination {self.variant!r}")
        for m in (self.mag_a, self.mag_b):
            if not (m > 0 and np.isfinite(m)):
                raise ValueError("magnitudes must be positive and finite")

    @staticmethod
    def single_single() -> "StateCombination":
        return StateCombination(SINGLE_SINGLE)

    @staticmethod
    def single_coherent(mag: float) -> "StateCombination":
        return StateCombination(SINGLE_COHERENT, mag_a=mag)

    @staticmethod
    def coherent_coherent(mag_a: float, mag_b: float) -> "StateCombination":
        return StateCombination(COHERENT_COHERENT, mag_a=mag_a, mag_b=mag_b)

    @property
    def visibility_factor(self) -> float:
        """Prefactor f in N_c = 1 - f * V."""
        if self.variant == SINGLE_SINGLE:
            return 1.0
        if self.variant == SINGLE_COHERENT:
            return 2.0 / (self.mag_a**2 + 2.0)
        a2 = self.mag_a**2
        b2 = self.mag_b**2
        return 2.0 * a2 * b2 / (2.0 * a2 * b2 + a2**2 + b2**2)


@dataclass(frozen=True, eq=False)
class DipPattern:
    """Normalized coincidence samples over delay, optionally with errors."""

    delays: np.ndarray
    nc_values: np.ndarray
    std_errors: Optional[np.ndarray] = None

    def __post_init__(self):
        d = np.asarray(self.delays, dtype=float).copy()
        nc = np.asarray(self.nc_values, dtype=float).copy()
        if d.ndim != 1 or nc.shape != d.shape:
            raise ValueError("delays and nc_values must be 1-d and the same length")
        if not np.all(np.isfinite(d)) or not np.all(np.isfinite(nc)):
            raise ValueError("delays and nc_values must be finite")
        if np.any(np.diff(d) <= 0):
            raise ValueError("delays must be strictly increasing")
        if np.any(nc < 0):
            raise ValueError("nc_values must be nonnegative")
        d.setflags(write=False)
        nc.setflags(write=False)
        object.__setattr__(self, "delays", d)
        object.__setattr__(self, "nc_values", nc)
        if self.std_errors is not None:
            se = np.asarray(self.std_errors, dtype=float).copy()
            if se.shape != d.shape or not np.all(np.isfinite(se)) or np.any(se < 0):
                raise ValueError("std_errors must be finite, nonnegative, same length")
            se.setflags(write=False)
            object.__setattr__(self, "std_errors", se)


def _check_same_grid(*grids: FrequencyGrid) -> FrequencyGrid:
    first = grids[0]
    for g in grids[1:]:
        if g != first:
            raise ValueError(f"grid mismatch: {g} vs {first}")
    return first


def cross_spectral_density(
    i1: IntensitySpectrum, i2: IntensitySpectrum, psd: PhaseSpectrum
) -> ComplexSeries:
    """g(w) with |g| = sqrt(I1 I2) and arg(g) = phase difference.

    Bins where either intensity vanishes give g = 0 regardless of phase.
    """
    grid = _check_same_grid(i1.grid, i2.grid, psd.grid)
    mag = np.sqrt(i1.values * i2.values)
    return ComplexSeries(grid, mag * np.exp(1j * psd.values))


def mode_matching(g: ComplexSeries) -> tuple[TimeGrid, np.ndarray]:
    """V(tau) = |G(tau)|^2 for a cross-spectral density of unit-area spectra."""
    if not isinstance(g.grid, FrequencyGrid):
        raise ValueError("mode_matching expects a series on a FrequencyGrid")
    G = _forward_values(g.values, g.grid)
    v = np.abs(G) ** 2
    if np.any(v > 1.0 + 1e-9):
        raise ValueError(
            f"mode matching degree exceeds 1 (max {v.max():.6g}); "
            "are the intensity spectra normalized to unit area?"
        )
    return conjugate_time_grid(g.grid), v


def coincidence_probability(
    v: np.ndarray, eta_a: float, eta_b: float, combo: StateCombination
) -> np.ndarray:
    """Two-detector coincidence probability for a given mode matching degree."""
    v = np.asarray(v, dtype=float)
    if np.any(v < 0) or np.any(v > 1.0 + 1e-9):
        raise ValueError("mode matching degree must lie in [0, 1]")
    for eta in (eta_a, eta_b):
        if not (0 < eta <= 1):
            raise ValueError("detector efficiencies must lie in (0, 1]")
    ee = eta_a * eta_b
    if combo.variant == SINGLE_SINGLE:
        return ee / 2.0 * (1.0 - v)
    if combo.variant == SINGLE_COHERENT:
        a2 = combo.mag_a**2
        return ee / 4.0 * (2.0 * a2 * (1.0 - v) + a2**2)
    a2 = combo.mag_a**2
    b2 = combo.mag_b**2
    return ee / 4.0 * (2.0 * a2 * b2 * (1.0 - v) + a2**2 + b2**2)


def normalized_coincidence(
    delays: np.ndarray, v: np.ndarray, combo: StateCombination
) -> DipPattern:
    """N_c(tau) = 1 - f * V(tau), with f set by the state combination."""
    v = np.asarray(v, dtype=float)
    if np.any(v < 0) or np.any(v > 1.0 + 1e-9):
        raise ValueError("mode matching degree must lie in [0, 1]")
    return DipPattern(delays, 1.0 - combo.visibility_factor * np.clip(v, 0.0, 1.0))


def cross_correlation_at(g: ComplexSeries, delays: np.ndarray) -> np.ndarray:
    """G(tau) at arbitrary delays by direct summation (not grid-locked)."""
    if not isinstance(g.grid, FrequencyGrid):
        raise ValueError("expected a series on a FrequencyGrid")
    delays = np.asarray(delays, dtype=float)
    if not np.all(np.isfinite(delays)):
        raise ValueError("delays must be finite")
    grid = g.grid
    # evaluate about the center frequency for numerical stability; the split-off
    # ramp exp(i w0 tau) cannot change |G|
    offsets = grid.frequencies - grid.center
    core = np.exp(1j * np.outer(delays, offsets)) @ g.values
    return grid.spacing * np.exp(1j * grid.center * delays) * core


def synthesize_dip(
    i1: IntensitySpectrum,
    i2: IntensitySpectrum,
    psd: PhaseSpectrum,
    combo: StateCombination,
    delays: Sequence[float],
) -> DipPattern:
    """Noiseless dip at the requested delays.

    Intensities are renormalized to unit area internally so that identical
    modes give V(0) = 1 exactly.
    """
    g = cross_spectral_density(i1.normalized(), i2.normalized(), psd)
    delays = np.asarray(delays, dtype=float)
    v = np.abs(cross_correlation_at(g, delays)) ** 2
    if np.any(v > 1.0 + 1e-9):
        raise ValueError("mode matching degree exceeds 1; inconsistent spectra")
    return normalized_coincidence(delays, np.clip(v, 0.0, 1.0), combo)
