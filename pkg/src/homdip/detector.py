"""Photon-counting simulation with binomial shot noise.

Coincidences at each delay are drawn as one binomial per point over the number
of laser pulses in the dwell time; the success probability is the accidental
(baseline) coincidence probability implied by the singles rates, scaled by the
true normalized coincidence. The RNG is Philox (counter-based, 64-bit keyed),
so ensembles reproduce bit-exactly across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .forward import DipPattern


@dataclass(frozen=True)
class CountingBudget:
    """Measurement budget for one dip scan.

    repetition_rate: laser pulses per second
    single_rate_target: singles counts per second on each detector
    duration_per_point: dwell time per delay point (s)
    dead_time: detector dead time (s); only used when dead-time correction is on
    seed: 64-bit RNG seed
    """

    repetition_rate: float
    single_rate_target: float
    duration_per_point: float
    dead_time: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (self.repetition_rate > 0):
            raise ValueError("repetition_rate must be positive")
        if not (self.duration_per_point > 0):
            raise ValueError("duration_per_point must be positive")
        if not (0 < self.single_rate_target < self.repetition_rate):
            raise ValueError("single_rate_target must lie in (0, repetition_rate)")
        if self.dead_time < 0:
            raise ValueError("dead_time must be nonnegative")

    @property
    def pulses_per_point(self) -> int:
        return int(round(self.repetition_rate * self.duration_per_point))


@dataclass(frozen=True, eq=False)
class CountRecord:
    """Raw counts per delay point plus the large-delay baseline."""

    delays: np.ndarray
    counts_a: np.ndarray
    counts_b: np.ndarray
    coincidences: np.ndarray
    baseline_coincidences: int

    def __post_init__(self):
        d = np.asarray(self.delays, dtype=float).copy()
        for name in ("counts_a", "counts_b", "coincidences"):
            arr = np.asarray(getattr(self, name), dtype=np.int64).copy()
            if arr.shape != d.shape or np.any(arr < 0):
                raise ValueError(f"{name} must be nonnegative and match delays")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        d.setflags(write=False)
        object.__setattr__(self, "delays", d)
        if self.baseline_coincidences < 0:
            raise ValueError("baseline_coincidences must be nonnegative")


def apply_dead_time(ideal_rate: float, dead_time: float) -> float:
    """Non-paralyzable dead-time model: r_eff = r / (1 + r * t_dead)."""
    if ideal_rate < 0 or dead_time < 0:
        raise ValueError("rate and dead time must be nonnegative")
    return ideal_rate / (1.0 + ideal_rate * dead_time)


def baseline_point_mask(
    delays: np.ndarray, nc_values: np.ndarray, halfwidth_multiple: float = 3.0
) -> np.ndarray:
    """Flag delay points far enough from the dip to serve as baseline.

    "Far enough" is |tau - tau_min| beyond `halfwidth_multiple` times the dip
    half-width at half depth. Falls back to the outermost 20% of points when
    the dip leaves no sample that far out.
    """
    delays = np.asarray(delays, dtype=float)
    nc = np.asarray(nc_values, dtype=float)
    i_min = int(np.argmin(nc))
    depth = 1.0 - nc[i_min]
    if depth <= 0:
        # flat pattern: everything is baseline
        return np.ones(delays.shape, dtype=bool)
    half_level = 1.0 - depth / 2.0
    below = np.abs(delays - delays[i_min])[nc <= half_level]
    halfwidth = float(below.max()) if below.size else 0.0
    mask = np.abs(delays - delays[i_min]) > halfwidth_multiple * halfwidth
    if not np.any(mask):
        k = max(1, delays.size // 5)
        order = np.argsort(np.abs(delays - delays[i_min]))
        mask = np.zeros(delays.shape, dtype=bool)
        mask[order[-k:]] = True
    return mask


def simulate_counts(
    true_nc: DipPattern,
    budget: CountingBudget,
    include_baseline_noise: bool = True,
    apply_dead_time_correction: bool = False,
    halfwidth_multiple: float = 3.0,
) -> CountRecord:
    """Draw a counting record for a true dip under the given budget.

    Deterministic given (inputs, budget.seed). With `include_baseline_noise`
    off, the baseline is the exact expected count instead of an average of
    noisy far-delay samples.
    """
    n_pulses = budget.pulses_per_point
    if n_pulses < 1:
        raise ValueError("budget yields zero pulses per point")
    single_rate = budget.single_rate_target
    if apply_dead_time_correction:
        single_rate = apply_dead_time(single_rate, budget.dead_time)
    p_single = single_rate / budget.repetition_rate
    p_baseline = p_single**2
    p_coinc = p_baseline * true_nc.nc_values
    if np.any(p_coinc < 0) or np.any(p_coinc > 1):
        raise ValueError("coincidence probability out of [0, 1]; inconsistent budget")

    rng = np.random.Generator(np.random.Philox(key=np.uint64(budget.seed)))
    n = true_nc.delays.size
    counts_a = rng.binomial(n_pulses, p_single, size=n)
    counts_b = rng.binomial(n_pulses, p_single, size=n)
    coincidences = rng.binomial(n_pulses, p_coinc)

    mask = baseline_point_mask(true_nc.delays, true_nc.nc_values, halfwidth_multiple)
    if include_baseline_noise:
        baseline = int(round(float(np.mean(coincidences[mask]))))
    else:
        baseline = int(round(n_pulses * p_baseline))
    return CountRecord(true_nc.delays, counts_a, counts_b, coincidences, baseline)


def estimate_dip(record: CountRecord) -> DipPattern:
    """Normalized coincidence estimate N_c = coincidences / baseline.

    Standard errors combine the per-point counting variance (floored at one
    count so zero-coincidence points keep a finite error) with the baseline's.
    """
    b = record.baseline_coincidences
    if b <= 0:
        raise ValueError("baseline_coincidences must be positive to normalize")
    c = record.coincidences.astype(float)
    nc = c / b
    var = np.maximum(c, 1.0) / b**2 + c**2 / b**3
    return DipPattern(record.delays, nc, np.sqrt(var))
