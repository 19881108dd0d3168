"""Command-line entry point.

    stochwave <subcommand> <config.toml> [--output PATH] [--format FMT]
              [--threads K] [--no-plot]

Subcommands: simulate, converge-time, converge-space, invariant-check,
contraction, slln, audit-model.  The config file is the sole positional
argument; results go to stdout as a table and, with ``--output``, to a CSV
or JSON-lines file plus a rendered PNG figure alongside (suppress with
``--no-plot``).  Exit status: 0 success, 2 config/validation error (the
message names the failing key), 3 solver failure (the message names the
step).
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import __version__
from .config import EXPERIMENT_KINDS, ExperimentConfig, load_config
from .ergodics import LyapunovParams, make_observable
from .errors import ConfigurationError, SolverError
from .experiments import (
    StudyReport,
    contraction_rate_study,
    invariant_linear_check,
    slln_decay_study,
    spatial_order_study,
    temporal_order_study,
)
from .integrator import simulate_path
from .noise import experiment_rng
from .nonlinearity import audit_assumptions
from .reporting import FORMATS, record_from_study, write_results
from .spectral import PhaseState, SpectralField

__all__ = ["run_cli", "main"]

THREADS_ENV_VAR = "STOCHWAVE_THREADS"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochwave",
        description="damped stochastic wave equation: simulation and "
                    "long-time statistics studies",
    )
    parser.add_argument("--version", action="version",
                        version=f"stochwave {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=f"run a '{kind}' experiment")
        p.add_argument("config", help="path to the TOML experiment config")
        p.add_argument("--output", "-o", default=None,
                       help="write the result record to this path")
        p.add_argument("--format", default="csv", choices=FORMATS,
                       help="output file format (default: csv)")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker threads for Monte Carlo replicas "
                            f"(default: ${THREADS_ENV_VAR} or 1)")
        p.add_argument("--no-plot", action="store_true",
                       help="skip rendering the PNG figure next to --output")
    return parser


def _resolve_threads(flag_value: int | None) -> int:
    if flag_value is not None:
        if flag_value < 1:
            raise ConfigurationError("--threads must be >= 1")
        return flag_value
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigurationError(
                f"environment variable {THREADS_ENV_VAR}={env!r} is not an integer"
            )
        if value < 1:
            raise ConfigurationError(f"{THREADS_ENV_VAR} must be >= 1")
        return value
    return 1


# ---------------------------------------------------------------------------
# per-kind runners
# ---------------------------------------------------------------------------

def _lyapunov_if_needed(cfg: ExperimentConfig, names) -> LyapunovParams | None:
    if any(str(n).startswith("lyapunov") for n in names):
        return LyapunovParams.for_model(cfg.eta, cfg.model())
    return None


def _run_simulate(cfg: ExperimentConfig, threads: int) -> StudyReport:
    started = time.perf_counter()
    names = cfg.experiment.get("observables", ["h1_norm_sq", "v_norm_sq"])
    record_every = cfg.experiment.get("record_every", 1)
    lyap = _lyapunov_if_needed(cfg, names)
    observers = {name: make_observable(name, lyap) for name in names}
    result = simulate_path(
        cfg.initial_state(), cfg.scheme(), cfg.model(), cfg.n_steps,
        spec=cfg.noise(), rng=experiment_rng(cfg.seed), observers=observers,
    )
    rows = []
    for n in range(0, cfg.n_steps + 1, record_every):
        row = {"step": n, "t": float(result.times[n])}
        row.update({name: float(result.observations[name][n]) for name in names})
        rows.append(row)
    summary = {f"final_{name}": float(result.observations[name][-1]) for name in names}
    summary.update(solver_iterations=result.solver_iterations,
                   max_residual=result.max_residual, passed=True)
    inputs = {"n_modes": cfg.n_modes, "eta": cfg.eta, "tau": cfg.tau,
              "horizon": cfg.horizon, "model": cfg.model_name,
              "observables": list(names)}
    return StudyReport("simulate", inputs, rows, summary, cfg.seed,
                       time.perf_counter() - started)


def _run_converge_time(cfg: ExperimentConfig, threads: int) -> StudyReport:
    return temporal_order_study(
        cfg.scheme(), cfg.model(), cfg.noise(),
        tau_ladder=cfg.experiment["tau_ladder"],
        tau_ref=cfg.experiment["tau_ref"],
        n_samples=cfg.experiment["n_samples"],
        horizon=cfg.horizon, seed=cfg.seed,
        x0=cfg.initial_state(), threads=threads,
    )


def _run_converge_space(cfg: ExperimentConfig, threads: int) -> StudyReport:
    n_ref = cfg.experiment["n_ref"]
    return spatial_order_study(
        cfg.scheme(), cfg.model(), cfg.noise(n_ref),
        n_ladder=cfg.experiment["n_ladder"], n_ref=n_ref,
        n_samples=cfg.experiment["n_samples"],
        horizon=cfg.horizon, seed=cfg.seed,
        x0=cfg.initial_state(n_ref), threads=threads,
    )


def _run_invariant_check(cfg: ExperimentConfig, threads: int) -> StudyReport:
    return invariant_linear_check(
        cfg.scheme(), cfg.noise(),
        burn_in=cfg.experiment["burn_in"], horizon=cfg.horizon,
        seed=cfg.seed,
        include_bias_probe=cfg.experiment.get("include_bias_probe", True),
        rel_tolerance=cfg.experiment.get("rel_tolerance", 0.05),
    )


def _random_pairs(cfg: ExperimentConfig, n_pairs: int, scale: float):
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    k = np.arange(1, cfg.n_modes + 1, dtype=float)
    pairs = []
    for _ in range(n_pairs):
        def draw():
            return PhaseState(
                SpectralField(scale * rng.standard_normal(cfg.n_modes) * k**-3),
                SpectralField(scale * rng.standard_normal(cfg.n_modes) * k**-2),
            )
        pairs.append((draw(), draw()))
    return pairs


def _run_contraction(cfg: ExperimentConfig, threads: int) -> StudyReport:
    pairs = _random_pairs(cfg, cfg.experiment["n_pairs"],
                          cfg.experiment.get("pair_scale", 1.0))
    return contraction_rate_study(
        cfg.scheme(), cfg.model(), cfg.noise(), pairs,
        n_steps=cfg.n_steps, seed=cfg.seed,
        min_rate=cfg.experiment.get("min_rate", 0.01),
    )


def _run_slln(cfg: ExperimentConfig, threads: int) -> StudyReport:
    observable = cfg.experiment["observable"]
    lyap = _lyapunov_if_needed(cfg, [observable])
    return slln_decay_study(
        cfg.scheme(), cfg.model(), observable,
        horizons=cfg.experiment["horizons"],
        replicas=cfg.experiment["replicas"],
        spec=cfg.noise(), seed=cfg.seed, threads=threads, lyapunov=lyap,
    )


def _run_audit_model(cfg: ExperimentConfig, threads: int) -> StudyReport:
    started = time.perf_counter()
    audit = audit_assumptions(
        cfg.model(), cfg.eta,
        r_max=cfg.experiment.get("r_max", 10.0),
        n_samples=cfg.experiment.get("n_points", 20001),
        rng=experiment_rng(cfg.seed),
    )
    summary = {
        "passed": audit.passed,
        "failures": "; ".join(audit.failures()),
        "model": cfg.model_name,
        "eta": cfg.eta,
    }
    inputs = {"model": cfg.model_name, "eta": cfg.eta, "r_max": audit.r_max,
              "n_points": audit.n_samples}
    return StudyReport("audit-model", inputs, audit.as_rows(), summary, cfg.seed,
                       time.perf_counter() - started)


_RUNNERS = {
    "simulate": _run_simulate,
    "converge-time": _run_converge_time,
    "converge-space": _run_converge_space,
    "invariant-check": _run_invariant_check,
    "contraction": _run_contraction,
    "slln": _run_slln,
    "audit-model": _run_audit_model,
}


# ---------------------------------------------------------------------------
# presentation
# ---------------------------------------------------------------------------

def _print_report(report: StudyReport, max_rows: int = 24):
    print(f"== stochwave {report.kind} (seed {report.seed}, "
          f"{report.wall_clock_s:.2f}s) ==")
    if report.rows:
        columns = list(report.rows[0].keys())
        print("  " + " | ".join(columns))
        shown = report.rows[:max_rows]
        for row in shown:
            cells = []
            for c in columns:
                value = row.get(c, "")
                cells.append(f"{value:.6g}" if isinstance(value, float) else str(value))
            print("  " + " | ".join(cells))
        if len(report.rows) > len(shown):
            print(f"  ... ({len(report.rows) - len(shown)} more rows)")
    for key, value in report.summary.items():
        print(f"  {key} = {value}")


def run_cli(argv) -> int:
    """Parse arguments, run the experiment, write outputs; returns exit status."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        threads = _resolve_threads(args.threads)
        cfg = load_config(args.config, expected_kind=args.command)
        report = _RUNNERS[args.command](cfg, threads)
    except ConfigurationError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except SolverError as err:
        where = f" at step {err.step_index}" if err.step_index is not None else ""
        print(f"solver failure{where}: {err}", file=sys.stderr)
        return 3

    record = record_from_study(report, config_echo=cfg.echo)
    _print_report(report)
    if args.output:
        write_results(record, args.output, args.format)
        print(f"wrote {args.format} record to {args.output}")
        if not args.no_plot:
            from .plots import render_figure

            stem, _, _ = args.output.rpartition(".")
            figure_path = (stem or args.output) + ".png"
            render_figure(record, figure_path)
            print(f"wrote figure to {figure_path}")

    if args.command == "audit-model" and not report.summary["passed"]:
        print(f"audit failed: {report.summary['failures']}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))
