"""Shared fixtures and builders for the test suite."""

import numpy as np
import pytest

from homdip import FrequencyGrid, IntensitySpectrum, PhaseSpectrum

TWO_PI = 2.0 * np.pi


def gaussian_spectrum(grid: FrequencyGrid, sigma: float, center=None) -> IntensitySpectrum:
    w0 = grid.center if center is None else center
    return IntensitySpectrum(
        grid, np.exp(-((grid.frequencies - w0) ** 2) / (2.0 * sigma**2))
    )


@pytest.fixture
def small_grid() -> FrequencyGrid:
    """64-point grid at a modest center frequency (keeps direct sums exact)."""
    return FrequencyGrid(center=TWO_PI * 5e9, spacing=TWO_PI * 0.25e9, count=64)


@pytest.fixture
def telecom_grid() -> FrequencyGrid:
    """512-point grid over 0.8 THz around 193.19 THz."""
    return FrequencyGrid(
        center=TWO_PI * 193.19e12, spacing=TWO_PI * 0.8e12 / 512, count=512
    )
