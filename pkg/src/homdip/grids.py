"""Sampling lattices and the discrete Fourier-transform convention.

Everything downstream assumes one convention, pinned here:

    forward  (frequency -> delay):  G(tau_m) = dw * sum_n g(w_n) exp(+i w_n tau_m)
    inverse  (delay -> frequency):  g(w_n) = dtau/(2 pi) * sum_m G(tau_m) exp(-i w_n tau_m)

Grids use fft-shifted storage: the physical center sits at index N/2, so the
center frequency stays explicit instead of hiding in wraparound order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

TWO_PI = 2.0 * np.pi


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform angular-frequency lattice, center sample at index N/2.

    center: angular frequency of sample N/2 (rad/s)
    spacing: step dw (rad/s), > 0
    count: number of samples, power of two, >= 8
    """

    center: float
    spacing: float
    count: int

    def __post_init__(self):
        if not np.isfinite(self.center):
            raise ValueError("center frequency must be finite")
        if not (self.spacing > 0 and np.isfinite(self.spacing)):
            raise ValueError("spacing must be positive and finite")
        if self.count < 8 or not _is_power_of_two(self.count):
            raise ValueError(f"count must be a power of two >= 8, got {self.count}")

    @property
    def frequencies(self) -> np.ndarray:
        """Angular frequencies w_i = center + (i - N/2) * spacing."""
        n = self.count
        return self.center + (np.arange(n) - n // 2) * self.spacing

    @property
    def span(self) -> float:
        return self.count * self.spacing


@dataclass(frozen=True)
class TimeGrid:
    """Uniform delay lattice conjugate to a FrequencyGrid.

    spacing: delay step dtau (s), fixed by dtau = 2 pi / (N dw)
    count: N, matching the conjugate frequency grid
    """

    spacing: float
    count: int

    def __post_init__(self):
        if not (self.spacing > 0 and np.isfinite(self.spacing)):
            raise ValueError("spacing must be positive and finite")
        if self.count < 8 or not _is_power_of_two(self.count):
            raise ValueError(f"count must be a power of two >= 8, got {self.count}")

    @property
    def delays(self) -> np.ndarray:
        """Delays tau_m = (m - N/2) * spacing."""
        n = self.count
        return (np.arange(n) - n // 2) * self.spacing


Grid = Union[FrequencyGrid, TimeGrid]


def conjugate_time_grid(freq: FrequencyGrid) -> TimeGrid:
    """Delay lattice conjugate to `freq`: dtau = 2 pi / (N dw), same N."""
    return TimeGrid(spacing=TWO_PI / (freq.count * freq.spacing), count=freq.count)


def is_conjugate(freq: FrequencyGrid, time: TimeGrid, rtol: float = 1e-9) -> bool:
    return freq.count == time.count and np.isclose(
        time.spacing, TWO_PI / (freq.count * freq.spacing), rtol=rtol
    )


@dataclass(frozen=True, eq=False)
class ComplexSeries:
    """Complex amplitudes sampled on a grid. Values are immutable."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex).copy()
        if vals.shape != (self.grid.count,):
            raise ValueError(
                f"values length {vals.shape} does not match grid count {self.grid.count}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


def _forward_values(values: np.ndarray, freq: FrequencyGrid) -> np.ndarray:
    """Raw forward transform on a plain array (no wrapping/validation)."""
    tgrid = conjugate_time_grid(freq)
    # dw * sum_n g_n exp(+i w_n tau_m), split into the center-frequency ramp
    # times a centered DFT with +i exponent (N * ifft in shifted order).
    core = np.fft.fftshift(np.fft.ifft(np.fft.ifftshift(values))) * freq.count
    return freq.spacing * np.exp(1j * freq.center * tgrid.delays) * core


def _inverse_values(values: np.ndarray, freq: FrequencyGrid) -> np.ndarray:
    """Raw inverse transform back onto `freq` (no wrapping/validation)."""
    tgrid = conjugate_time_grid(freq)
    x = values * np.exp(-1j * freq.center * tgrid.delays)
    return (tgrid.spacing / TWO_PI) * np.fft.fftshift(np.fft.fft(np.fft.ifftshift(x)))


def forward_transform(g: ComplexSeries) -> ComplexSeries:
    """Frequency -> delay: G(tau_m) = dw * sum_n g(w_n) exp(+i w_n tau_m)."""
    if not isinstance(g.grid, FrequencyGrid):
        raise ValueError("forward_transform expects a series on a FrequencyGrid")
    freq = g.grid
    return ComplexSeries(conjugate_time_grid(freq), _forward_values(g.values, freq))


def inverse_transform(G: ComplexSeries, freq: FrequencyGrid) -> ComplexSeries:
    """Delay -> frequency: g(w_n) = dtau/(2 pi) * sum_m G(tau_m) exp(-i w_n tau_m).

    `freq` must be the conjugate FrequencyGrid of G's TimeGrid (the time grid
    alone does not remember its center frequency).
    """
    if not isinstance(G.grid, TimeGrid):
        raise ValueError("inverse_transform expects a series on a TimeGrid")
    if not is_conjugate(freq, G.grid):
        raise ValueError("frequency grid is not conjugate to the series' time grid")
    return ComplexSeries(freq, _inverse_values(G.values, freq))
