"""Command-line front end: verify-lift, certify-weight, simulate, lyapunov-report, sweep."""

import argparse
import logging
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np
from tqdm import tqdm
from tqdm.contrib.logging import logging_redirect_tqdm

from .config import ConfigError, load_run_config
from .export import write_json, write_table, write_trace
from .grid import Grid, make_grid
from .lift import heat_residual, verify_lift_properties
from .lyapunov import (
    G,
    comparison_margins,
    random_field_check,
    riccati_blowup_time_exact,
    riccati_lower_bound,
    threshold_check,
)
from .models import LiftParams, Outcome, ProfileKind, RunConfig, WeightSpec
from .profile_import import import_profile
from .solver import State, amplitude_for_threshold, initial_datum, run
from .weight import Weight, build_weight, certify

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
COMPARISON_TOLERANCE = 0.05


def _configure_logging(quiet: bool) -> None:
    level = logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(level)
    logging.captureWarnings(True)


def _weight(config: RunConfig, required: bool = False) -> Optional[Weight]:
    spec = config.weight_spec()
    if spec is None and required:
        spec = WeightSpec()
    return build_weight(spec, samples=config.certificate_samples) if spec is not None else None


def _initial_state(config: RunConfig, grid: Grid, p: LiftParams, amplitude: float) -> State:
    if config.profile:
        profile = import_profile(config.profile, grid)
        return initial_datum(ProfileKind.CUSTOM, amplitude, grid, p, profile)
    return initial_datum(ProfileKind.GAUSSIAN_BUMP, amplitude, grid, p)


def _resolve_amplitude(config: RunConfig, p: LiftParams, weight: Optional[Weight]) -> tuple[float, Optional[float]]:
    """Numeric amplitude as configured, or the threshold amplitude from a pilot run."""
    if config.amplitude != "auto":
        return float(config.amplitude), None
    weight = weight or build_weight(WeightSpec(), samples=config.certificate_samples)
    grid = make_grid(config.y_max, config.n)
    pilot = run(
        config.solver_config(t_max=config.pilot_t_max),
        p,
        weight,
        initial=_initial_state(config, grid, p, config.pilot_amplitude),
    )
    c_hat = pilot.trace.C_hat
    kind = ProfileKind.CUSTOM if config.profile else ProfileKind.GAUSSIAN_BUMP
    profile = import_profile(config.profile, grid) if config.profile else None
    amplitude = amplitude_for_threshold(c_hat, grid, weight, p, config.threshold_margin, kind, profile)
    logger.info("pilot run fitted C_hat=%.6g; threshold amplitude A=%.6g", c_hat, amplitude)
    return amplitude, c_hat


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_verify_lift(config: RunConfig, out: Path) -> int:
    grid = make_grid(config.y_max, config.n)
    p = config.lift_params()
    report = verify_lift_properties(p, config.lift_times, grid)
    data = report.to_dict()
    data["heat_residual"] = {
        "t": 1.0,
        "dt_1e-4": heat_residual(1.0, p, grid, dt=1e-4),
        "dt_5e-5": heat_residual(1.0, p, grid, dt=5e-5),
    }
    write_json(data, out / "lift_report.json")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_certify_weight(config: RunConfig, out: Path) -> int:
    weight = _weight(config, required=True)
    cert = certify(weight, samples=config.certificate_samples)
    data = cert.to_dict()
    data["weight"] = weight.to_dict()
    write_json(data, out / "certificate.json")
    return EXIT_OK if cert.passed else EXIT_CHECK_FAILED


def cmd_simulate(config: RunConfig, out: Path) -> int:
    p = config.lift_params()
    solver_config = config.solver_config()
    weight = _weight(config)
    amplitude, c_hat = _resolve_amplitude(config, p, weight)
    grid = make_grid(config.y_max, config.n)
    result = run(solver_config, p, weight, initial=_initial_state(config, grid, p, amplitude))

    result.report.amplitude = amplitude
    result.report.trajectory_file = write_table(result.records, out / "trajectory.csv").name
    data = result.report.to_dict()
    if c_hat is not None:
        data["pilot_C_hat"] = c_hat
    if result.trace is not None:
        write_trace(result.trace, out / "lyapunov.csv")
        data["lyapunov_file"] = "lyapunov.csv"
    write_json(data, out / "blowup_report.json")
    return EXIT_CHECK_FAILED if result.report.outcome is Outcome.MIN_PRINCIPLE_VIOLATION else EXIT_OK


def cmd_lyapunov_report(config: RunConfig, out: Path) -> int:
    p = config.lift_params()
    weight = _weight(config, required=True)
    amplitude, pilot_c = _resolve_amplitude(config, p, weight)
    grid = make_grid(config.y_max, config.n)
    result = run(config.solver_config(), p, weight, initial=_initial_state(config, grid, p, amplitude))
    trace = result.trace
    write_trace(trace, out / "lyapunov.csv")

    G0 = float(trace.G[0])
    constants = trace.constants
    span = (0.0, max(config.t_max, float(trace.t[-1])))
    predictions = {}
    for label, C in (("fitted", trace.C_hat), ("assembled", constants.assembled_C)):
        riccati = riccati_lower_bound(G0, C, span)
        predictions[label] = {
            "C": C,
            "threshold_met": threshold_check(G0, C),
            "blowup_time": riccati.blowup_time,
            "blowup_time_exact": riccati_blowup_time_exact(G0, C),
        }
    margins = comparison_margins(trace, riccati_lower_bound(G0, trace.C_hat, span))
    structural = random_field_check(weight, grid, config.seed, config.random_fields)

    summary = {
        "amplitude": amplitude,
        "pilot_C_hat": pilot_c,
        "G0": G0,
        "constants": constants.to_dict(),
        "C_hat": trace.C_hat,
        "riccati": predictions,
        "comparison": {
            "samples": int(len(margins)),
            "min_relative_margin": float(np.min(margins)) if len(margins) else None,
            "within_tolerance": bool(len(margins) == 0 or np.min(margins) >= -COMPARISON_TOLERANCE),
        },
        "bound_margins_min": {
            "I1": float(np.min(trace.margin_I1)),
            "I2": float(np.min(trace.margin_I2)),
            "I3": float(np.min(trace.margin_I3)),
            "I4": float(np.min(trace.margin_I4)),
            "assembled": float(np.min(trace.margin_assembled)),
        },
        "random_fields": structural.to_dict(),
        "run": result.report.to_dict(),
    }
    write_json(summary, out / "lyapunov_report.json")
    return EXIT_OK if structural.passed else EXIT_CHECK_FAILED


def _sweep_one(job: tuple[dict, float, float]) -> dict:
    """One sweep entry; top-level so worker processes can unpickle it."""
    config_dict, kappa, amplitude = job
    config = RunConfig.from_dict(config_dict)
    p = LiftParams(kappa=kappa)
    grid = make_grid(config.y_max, config.n)
    initial = _initial_state(config, grid, p, amplitude)
    result = run(config.solver_config(), p, None, initial=initial)
    report = result.report
    row = {
        "kappa": kappa,
        "amplitude": amplitude,
        "outcome": report.outcome.value,
        "t_star": report.t_star if report.t_star is not None else float("nan"),
        "final_time": report.final_time,
        "final_max_abs_a": report.final_max_abs_a,
        "min_a_over_run": report.min_a_over_run,
        "steps": report.steps,
    }
    spec = config.weight_spec()
    if spec is not None:
        row["G0"] = G(initial, build_weight(spec, samples=config.certificate_samples))
    return row


def _dedupe(values: list[float], name: str) -> list[float]:
    seen: list[float] = []
    for v in values:
        if v in seen:
            logger.warning("duplicate %s value %g dropped from the sweep", name, v)
        else:
            seen.append(v)
    return seen


def cmd_sweep(config: RunConfig, out: Path, workers: int = 1) -> int:
    if not config.amplitudes and not config.kappas:
        raise ConfigError("sweep needs a non-empty 'amplitudes' or 'kappas' list")
    amplitudes = _dedupe(config.amplitudes, "amplitude")
    kappas = _dedupe(config.kappas, "kappa")
    if not amplitudes:
        if config.amplitude == "auto":
            raise ConfigError("a kappa sweep needs a numeric 'amplitude'")
        amplitudes = [float(config.amplitude)]
    kappas = kappas or [config.kappa]
    for k in kappas:
        if k < 0:
            raise ConfigError(f"'kappas' entries must be >= 0, got {k}")

    base = config.to_dict()
    jobs = [(base, k, a) for k in kappas for a in amplitudes]
    logger.info("sweep over %d runs with %d worker(s)", len(jobs), workers)
    with logging_redirect_tqdm():
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(tqdm(pool.map(_sweep_one, jobs), total=len(jobs), desc="sweep"))
        else:
            rows = [_sweep_one(job) for job in tqdm(jobs, desc="sweep")]

    write_table(rows, out / "sweep.csv")
    monotone = {}
    for k in kappas:
        blown = sorted(
            (r for r in rows if r["kappa"] == k and r["outcome"] == Outcome.BLEWUP.value),
            key=lambda r: r["amplitude"],
        )
        t_stars = [r["t_star"] for r in blown]
        monotone[f"{k:g}"] = all(b <= a for a, b in zip(t_stars, t_stars[1:]))
    write_json(
        {"runs": rows, "t_star_non_increasing_in_amplitude": monotone},
        out / "sweep_report.json",
    )
    return EXIT_OK


COMMANDS = {
    "verify-lift": cmd_verify_lift,
    "certify-weight": cmd_certify_weight,
    "simulate": cmd_simulate,
    "lyapunov-report": cmd_lyapunov_report,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration (defaults apply when omitted)")
    common.add_argument("--out", type=Path, help="output directory (overrides the 'out' key)")
    common.add_argument("--workers", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--quiet", action="store_true", help="only log warnings and errors")

    parser = argparse.ArgumentParser(
        prog="prandtl-blowup",
        description="Numerical laboratory for finite-time blowup on the symmetry axis",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify-lift", parents=[common], help="check sign and bound properties of the heat lift")
    sub.add_parser("certify-weight", parents=[common], help="certify the weight conditions by dense sampling")
    sub.add_parser("simulate", parents=[common], help="run the solver and write the trajectory")
    sub.add_parser("lyapunov-report", parents=[common], help="run with the weight and report the Riccati comparison")
    sub.add_parser("sweep", parents=[common], help="run over lists of amplitudes and/or kappas")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.quiet)
    if args.quiet:
        warnings.filterwarnings("ignore")

    try:
        config = load_run_config(args.config)
        if args.out is not None:
            config = replace(config, out=str(args.out))
        if args.workers < 1:
            raise ConfigError(f"--workers must be >= 1, got {args.workers}")
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        command = COMMANDS[args.command]
        if args.command == "sweep":
            return command(config, out, args.workers)
        return command(config, out)
    except ConfigError as e:
        logger.error("configuration error: %s", e)
        return EXIT_CONFIG_ERROR
    except ValueError as e:
        logger.error("validation error: %s", e)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
