"""Command-line interface: simulate | retrieve | ensemble | gen-phase.

Each subcommand reads CSV/JSON inputs, runs the corresponding library
pipeline, and writes plot-ready tabular outputs into --outdir. Exit codes:
0 success, 2 input/usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from . import fileio, phases
from .detector import CountingBudget, estimate_dip, simulate_counts
from .ensemble import (
    EnsembleSpec,
    Scenario,
    coverage_statistic,
    export_heatmap,
    published_scenario,
    run_ensemble,
)
from .fileio import FileFormatError
from .forward import (
    DipPattern,
    IntensitySpectrum,
    PhaseSpectrum,
    StateCombination,
    synthesize_dip,
)
from .grids import FrequencyGrid
from .retrieval import RetrievalConfig, RetrievalError, detrend, run_retrieval

TWO_PI = 2.0 * np.pi
THZ = TWO_PI * 1e12
PS = 1e-12

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


class InputError(ValueError):
    """User-facing input problem (exit code 2)."""


# --- shared argument plumbing ------------------------------------------------


def _add_combo_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--combo",
        choices=["single-single", "single-coherent", "coherent-coherent"],
        default="single-single",
        help="incident-state combination (default: single-single)",
    )
    parser.add_argument("--mag-a", type=float, default=1.0, help="coherent magnitude |A| or |A1|")
    parser.add_argument("--mag-b", type=float, default=1.0, help="coherent magnitude |A2|")


def _combo_from_args(args: argparse.Namespace) -> StateCombination:
    return StateCombination(args.combo, mag_a=args.mag_a, mag_b=args.mag_b)


def _add_grid_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--center-thz", type=float, required=True, help="grid center (THz)")
    parser.add_argument("--span-thz", type=float, required=True, help="grid span (THz)")
    parser.add_argument("--count", type=int, default=512, help="grid samples (power of two)")


def _grid_from_args(args: argparse.Namespace) -> FrequencyGrid:
    try:
        return FrequencyGrid(
            center=args.center_thz * THZ,
            spacing=args.span_thz * THZ / args.count,
            count=args.count,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _retrieval_config(config_path: Optional[str], overrides: dict) -> RetrievalConfig:
    """JSON file values first, then non-None CLI flags on top."""
    values: dict = {}
    if config_path is not None:
        payload = fileio.read_json(config_path)
        known = {f.name for f in dataclasses.fields(RetrievalConfig)}
        unknown = set(payload) - known
        if unknown:
            raise InputError(f"{config_path}: unknown retrieval keys {sorted(unknown)}")
        values.update(payload)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RetrievalConfig(**values)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid retrieval configuration: {exc}") from None


def _parse_delays(args: argparse.Namespace) -> np.ndarray:
    delays = np.arange(args.delay_start_ps, args.delay_stop_ps + 1e-9, args.delay_step_ps)
    if args.baseline_delays_ps:
        extra = [float(x) for x in args.baseline_delays_ps.split(",")]
        delays = np.concatenate([delays, extra])
    delays = np.unique(delays) * PS
    if delays.size < 2:
        raise InputError("delay sweep contains fewer than 2 points")
    return delays


def _outdir(args: argparse.Namespace) -> str:
    os.makedirs(args.outdir, exist_ok=True)
    return args.outdir


# --- subcommands --------------------------------------------------------------


def cmd_gen_phase(args: argparse.Namespace) -> int:
    grid = _grid_from_args(args)
    center = args.phase_center_thz * THZ if args.phase_center_thz is not None else None
    if args.preset == "flat":
        psd = phases.flat(grid)
    elif args.preset == "linear":
        psd = phases.linear(grid, args.slope, center)
    elif args.preset == "quadratic":
        psd = phases.quadratic(grid, args.curvature, center)
    elif args.preset == "inverted-n":
        if args.halfwidth_thz is None:
            raise InputError("inverted-n requires --halfwidth-thz")
        psd = phases.inverted_n(
            grid,
            amplitude=args.amplitude,
            halfwidth=args.halfwidth_thz * THZ,
            center=center,
            smoothing=args.smoothing_thz * THZ,
        )
    elif args.preset == "custom-table":
        if args.table is None:
            raise InputError("custom-table requires --table pointing to a PSD CSV")
        table = fileio.read_phase(args.table)
        psd = phases.custom_table(grid, table.grid.frequencies, table.values)
    else:  # pragma: no cover - argparse restricts choices
        raise InputError(f"unknown preset {args.preset!r}")
    fileio.write_phase(args.output, psd)
    print(f"wrote {args.output}")
    return EXIT_OK


def _load_scenario_inputs(
    args: argparse.Namespace,
) -> tuple[IntensitySpectrum, IntensitySpectrum, PhaseSpectrum]:
    spec_a = fileio.read_spectrum(args.spectrum_a)
    spec_b = fileio.read_spectrum(args.spectrum_b)
    psd = fileio.read_phase(args.phase)
    if not (spec_a.grid == spec_b.grid == psd.grid):
        raise InputError(
            "input grids differ: "
            f"A spans {spec_a.grid}, B spans {spec_b.grid}, phase spans {psd.grid}"
        )
    return spec_a, spec_b, psd


def cmd_simulate(args: argparse.Namespace) -> int:
    spec_a, spec_b, psd = _load_scenario_inputs(args)
    combo = _combo_from_args(args)
    delays = _parse_delays(args)
    outdir = _outdir(args)

    dip = synthesize_dip(spec_a, spec_b, psd, combo, delays)
    fileio.write_dip(os.path.join(outdir, "dip_true.csv"), dip)
    print(f"wrote {os.path.join(outdir, 'dip_true.csv')}")

    if args.duration_per_point is not None:
        if args.seed is None:
            raise InputError("--seed is required when simulating counting noise")
        budget = CountingBudget(
            repetition_rate=args.repetition_rate,
            single_rate_target=args.single_rate,
            duration_per_point=args.duration_per_point,
            dead_time=args.dead_time,
            seed=args.seed,
        )
        record = simulate_counts(
            dip, budget, halfwidth_multiple=args.baseline_halfwidth_multiple
        )
        estimated = estimate_dip(record)
        fileio.write_counts(os.path.join(outdir, "counts.csv"), record)
        fileio.write_dip(os.path.join(outdir, "dip_estimated.csv"), estimated, record)
        print(f"wrote {os.path.join(outdir, 'counts.csv')}")
        print(f"wrote {os.path.join(outdir, 'dip_estimated.csv')}")
    return EXIT_OK


def cmd_retrieve(args: argparse.Namespace) -> int:
    spec_a = fileio.read_spectrum(args.spectrum_a)
    spec_b = fileio.read_spectrum(args.spectrum_b)
    if spec_a.grid != spec_b.grid:
        raise InputError(f"spectrum grids differ: {spec_a.grid} vs {spec_b.grid}")
    dip = fileio.read_dip(args.dip)
    if dip.delays.size < 16:
        raise InputError(f"dip has {dip.delays.size} delay points; need at least 16")
    combo = _combo_from_args(args)
    config = _retrieval_config(
        args.config,
        {
            "seed": args.seed,
            "restarts": args.restarts,
            "gs_iterations": args.gs_iterations,
            "basin_hops": args.basin_hops,
        },
    )
    outdir = _outdir(args)

    g_mag = np.sqrt(spec_a.normalized().values * spec_b.normalized().values)
    result = run_retrieval(spec_a.grid, g_mag, dip, combo, config)

    fileio.write_phase(os.path.join(outdir, "psd.csv"), result.psd)
    fileio.write_table(
        os.path.join(outdir, "residual_history.csv"),
        ["iteration", "residual"],
        [np.arange(result.residual_history.size, dtype=float), result.residual_history],
    )
    fileio.write_json(
        os.path.join(outdir, "diagnostics.json"),
        {
            "flipped": result.flipped,
            "ambiguous": result.ambiguous,
            "fitted_amplitude": result.fitted_amplitude,
            "final_residual": result.final_residual,
            "flip_residual": result.flip_residual,
            "winning_restart": result.restart_index,
        },
    )
    for name in ("psd.csv", "residual_history.csv", "diagnostics.json"):
        print(f"wrote {os.path.join(outdir, name)}")
    return EXIT_OK


def _ensemble_spec_from_file(path: str, args: argparse.Namespace) -> EnsembleSpec:
    payload = fileio.read_json(path)
    base = published_scenario(grid_count=int(payload.get("grid_count", 512)))

    if payload.get("published_scenario", True):
        scenario = base.scenario
    else:
        for key in ("spectrum_a", "spectrum_b", "phase"):
            if key not in payload:
                raise InputError(f"{path}: custom scenario requires {key!r}")
        spec_a = fileio.read_spectrum(payload["spectrum_a"])
        spec_b = fileio.read_spectrum(payload["spectrum_b"])
        psd = fileio.read_phase(payload["phase"])
        combo = StateCombination(
            payload.get("combo", "single-single"),
            mag_a=float(payload.get("mag_a", 1.0)),
            mag_b=float(payload.get("mag_b", 1.0)),
        )
        delays = np.asarray(payload["delays_ps"], dtype=float) * PS
        scenario = Scenario(spec_a, spec_b, psd, combo, delays)

    budget_keys = ("repetition_rate", "single_rate_target", "duration_per_point", "dead_time")
    budget = replace(
        base.budget,
        **{k: float(payload[k]) for k in budget_keys if k in payload},
    )
    retrieval_known = {f.name for f in dataclasses.fields(RetrievalConfig)}
    retrieval = replace(
        base.retrieval,
        **{k: payload["retrieval"][k] for k in payload.get("retrieval", {})},
    ) if set(payload.get("retrieval", {})) <= retrieval_known else None
    if retrieval is None:
        unknown = set(payload["retrieval"]) - retrieval_known
        raise InputError(f"{path}: unknown retrieval keys {sorted(unknown)}")

    band = base.band
    if "band_thz" in payload:
        lo, hi = payload["band_thz"]
        band = (float(lo) * THZ, float(hi) * THZ)

    try:
        spec = EnsembleSpec(
            scenario=scenario,
            budget=budget,
            retrieval=retrieval,
            band=band,
            n_runs=int(payload.get("n_runs", base.n_runs)),
            base_seed=int(payload.get("base_seed", 0)),
            baseline_halfwidth_multiple=float(
                payload.get("baseline_halfwidth_multiple", base.baseline_halfwidth_multiple)
            ),
        )
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    if args.n_runs is not None:
        spec = replace(spec, n_runs=args.n_runs)
    return replace(spec, base_seed=args.seed)


def cmd_ensemble(args: argparse.Namespace) -> int:
    spec = _ensemble_spec_from_file(args.spec, args)
    outdir = _outdir(args)
    dist = run_ensemble(spec, workers=args.workers)

    g_mag = spec.scenario.correlation_magnitude()
    truth_detrended = detrend(spec.scenario.truth, g_mag)
    coverage = coverage_statistic(dist, truth_detrended, 0.1, spec.band)
    heatmap, quantiles = export_heatmap(dist, spec.band)

    fileio.write_table(
        os.path.join(outdir, "heatmap.csv"),
        ["freq_thz", "phase_bin_rad", "count"],
        [heatmap[:, 0], heatmap[:, 1], heatmap[:, 2]],
    )
    fileio.write_table(
        os.path.join(outdir, "quantiles.csv"),
        ["freq_thz", "q05", "q50", "q95"],
        [quantiles[:, 0], quantiles[:, 1], quantiles[:, 2], quantiles[:, 3]],
    )
    fileio.write_json(
        os.path.join(outdir, "summary.json"),
        {
            "n_runs": spec.n_runs,
            "completed_runs": dist.n_runs,
            "failed_runs": list(dist.failed_runs),
            "coverage_at_0p1_rad": coverage,
            "engine_flip_matches": dist.engine_flip_matches,
        },
    )
    for name in ("heatmap.csv", "quantiles.csv", "summary.json"):
        print(f"wrote {os.path.join(outdir, name)}")
    print(f"coverage at 0.1 rad: {coverage:.4f} ({dist.n_runs} runs)")
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="homdip",
        description="Simulate Hong-Ou-Mandel dips and reconstruct phase spectrum differences.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="synthesize a dip, optionally with counting noise")
    p_sim.add_argument("--spectrum-a", required=True)
    p_sim.add_argument("--spectrum-b", required=True)
    p_sim.add_argument("--phase", required=True, help="PSD CSV (freq_thz,phase_rad)")
    _add_combo_args(p_sim)
    p_sim.add_argument("--delay-start-ps", type=float, required=True)
    p_sim.add_argument("--delay-stop-ps", type=float, required=True)
    p_sim.add_argument("--delay-step-ps", type=float, required=True)
    p_sim.add_argument(
        "--baseline-delays-ps",
        default="",
        help="comma-separated extra far delays for the baseline",
    )
    p_sim.add_argument("--duration-per-point", type=float, help="enable counting noise (s/point)")
    p_sim.add_argument("--repetition-rate", type=float, default=36.88e6)
    p_sim.add_argument("--single-rate", type=float, default=1.3e6)
    p_sim.add_argument("--dead-time", type=float, default=0.0)
    p_sim.add_argument("--baseline-halfwidth-multiple", type=float, default=3.0)
    p_sim.add_argument("--seed", type=int, help="RNG seed (required with noise)")
    p_sim.add_argument("--outdir", required=True)
    p_sim.set_defaults(handler=cmd_simulate)

    p_ret = sub.add_parser("retrieve", help="reconstruct the PSD from spectra and a dip")
    p_ret.add_argument("--spectrum-a", required=True)
    p_ret.add_argument("--spectrum-b", required=True)
    p_ret.add_argument("--dip", required=True)
    _add_combo_args(p_ret)
    p_ret.add_argument("--config", help="JSON with RetrievalConfig keys")
    p_ret.add_argument("--seed", type=int, required=True)
    p_ret.add_argument("--restarts", type=int)
    p_ret.add_argument("--gs-iterations", type=int)
    p_ret.add_argument("--basin-hops", type=int)
    p_ret.add_argument("--outdir", required=True)
    p_ret.set_defaults(handler=cmd_retrieve)

    p_ens = sub.add_parser("ensemble", help="Monte Carlo simulate-retrieve ensemble")
    p_ens.add_argument("--spec", required=True, help="ensemble spec JSON")
    p_ens.add_argument("--seed", type=int, required=True, help="base seed")
    p_ens.add_argument("--n-runs", type=int, help="override the spec's n_runs")
    p_ens.add_argument("--workers", type=int, default=1)
    p_ens.add_argument("--outdir", required=True)
    p_ens.set_defaults(handler=cmd_ensemble)

    p_gen = sub.add_parser("gen-phase", help="generate a preset phase function CSV")
    p_gen.add_argument("--preset", required=True, choices=list(phases.PRESET_NAMES))
    _add_grid_args(p_gen)
    p_gen.add_argument("--amplitude", type=float, default=1.0)
    p_gen.add_argument("--halfwidth-thz", type=float)
    p_gen.add_argument("--slope", type=float, default=0.0, help="rad per rad/s (linear)")
    p_gen.add_argument("--curvature", type=float, default=0.0, help="rad per (rad/s)^2")
    p_gen.add_argument("--smoothing-thz", type=float, default=0.0)
    p_gen.add_argument("--phase-center-thz", type=float)
    p_gen.add_argument("--table", help="PSD CSV for custom-table")
    p_gen.add_argument("--output", required=True)
    p_gen.set_defaults(handler=cmd_gen_phase)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (InputError, FileFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (RetrievalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
