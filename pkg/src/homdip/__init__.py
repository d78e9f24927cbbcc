"""Hong-Ou-Mandel dip simulation and phase spectrum difference retrieval."""

from .detector import (
    CountingBudget,
    CountRecord,
    apply_dead_time,
    baseline_point_mask,
    estimate_dip,
    simulate_counts,
)
from .ensemble import (
    EnsembleSpec,
    PhaseDistribution,
    Scenario,
    coverage_statistic,
    export_heatmap,
    published_scenario,
    run_ensemble,
)
from .fileio import (
    FileFormatError,
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
from .forward import (
    DipPattern,
    IntensitySpectrum,
    PhaseSpectrum,
    StateCombination,
    coincidence_probability,
    cross_correlation_at,
    cross_spectral_density,
    mode_matching,
    normalized_coincidence,
    synthesize_dip,
)
from .grids import (
    ComplexSeries,
    FrequencyGrid,
    TimeGrid,
    conjugate_time_grid,
    forward_transform,
    inverse_transform,
    is_conjugate,
)
from .retrieval import (
    RetrievalConfig,
    RetrievalError,
    RetrievalResult,
    adapted_gs_step,
    detrend,
    dip_to_correlation_magnitude,
    flip_candidate,
    gp_step,
    gs_step,
    residual,
    resample_correlation_magnitude,
    run_retrieval,
    spectral_centroid,
    weighted_rms,
)

__version__ = "0.1.0"

__all__ = [
    "ComplexSeries",
    "CountingBudget",
    "CountRecord",
    "DipPattern",
    "EnsembleSpec",
    "FileFormatError",
    "FrequencyGrid",
    "IntensitySpectrum",
    "PhaseDistribution",
    "PhaseSpectrum",
    "RetrievalConfig",
    "RetrievalError",
    "RetrievalResult",
    "Scenario",
    "StateCombination",
    "TimeGrid",
    "adapted_gs_step",
    "apply_dead_time",
    "baseline_point_mask",
    "coincidence_probability",
    "conjugate_time_grid",
    "coverage_statistic",
    "cross_correlation_at",
    "cross_spectral_density",
    "detrend",
    "dip_to_correlation_magnitude",
    "estimate_dip",
    "export_heatmap",
    "flip_candidate",
    "forward_transform",
    "gp_step",
    "gs_step",
    "inverse_transform",
    "is_conjugate",
    "mode_matching",
    "normalized_coincidence",
    "published_scenario",
    "read_counts",
    "read_dip",
    "read_json",
    "read_phase",
    "read_spectrum",
    "resample_correlation_magnitude",
    "residual",
    "run_ensemble",
    "run_retrieval",
    "simulate_counts",
    "spectral_centroid",
    "synthesize_dip",
    "weighted_rms",
    "write_counts",
    "write_dip",
    "write_json",
    "write_phase",
    "write_spectrum",
]
