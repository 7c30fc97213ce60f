"""Command-line front end: ``levysde {simulate,estimate,residuals,infer,study}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .avar import joint_fit
from .errors import LevySDEError
from .gqmle import fit_gqmle
from .levy import make_driver
from .models import MODELS, get_model
from .montecarlo import (
    ExperimentConfig,
    bundled_config_path,
    emit_table,
    run_study,
    write_study_outputs,
)
from .residual import bias_matrix, builtin_phi_cos, euler_residuals, moment_estimate, zeta_estimate
from .series_io import read_series, write_series
from .simulate import SimulationPlan, simulate_path

HELP_WIDTH = 88
EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _formatter(prog):
    return argparse.HelpFormatter(prog, width=HELP_WIDTH, max_help_position=32)


def _floats(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("expected at least one number")
    return vals


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _count(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _level(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError("level must lie in (0, 1)")
    return v


def _add_model(p):
    p.add_argument("--model", required=True, choices=sorted(MODELS), help="coefficient model")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="levysde", formatter_class=_formatter,
        description="Simulation and two-step estimation for Lévy-driven SDEs.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", formatter_class=_formatter, help="simulate an observation series",
                       description="Simulate X on the grid t_j = j h, j = 0..T/h, by fine-step Euler.")
    _add_model(p)
    p.add_argument("--alpha", required=True, type=_floats, help="drift parameter(s), comma-separated")
    p.add_argument("--gamma", required=True, type=_floats, help="scale parameter(s), comma-separated")
    p.add_argument("--driver", required=True, choices=["nig", "cpn"], help="Lévy driver family")
    p.add_argument("--delta", type=_positive, help="NIG tail parameter (driver nig)")
    p.add_argument("--rate", type=_positive, help="jump rate (driver cpn)")
    p.add_argument("--T", dest="T", required=True, type=_positive, help="time horizon")
    p.add_argument("--h", required=True, type=_positive, help="observation step")
    p.add_argument("--seed", required=True, type=_seed, help="driver seed (unsigned 64-bit)")
    p.add_argument("--fine-factor", type=_count, default=10, help="Euler sub-steps per observation step")
    p.add_argument("--x0", type=float, default=0.0, help="initial state")
    p.add_argument("-o", "--output", required=True, help="output file (.csv, or .bin for LSDE1)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", formatter_class=_formatter, help="Gaussian quasi-likelihood fit",
                       description="Solve the quasi-likelihood estimating equations on a series.")
    _add_model(p)
    p.add_argument("--input", required=True, help="series file (CSV or LSDE1)")
    p.add_argument("--tol", type=_positive, default=1e-10, help="root tolerance")
    p.add_argument("--multistart", type=_count, default=8, help="number of fallback starts")
    p.add_argument("-o", "--output", help="write the JSON fit here instead of stdout")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("residuals", formatter_class=_formatter, help="Euler residuals and moment fit",
                       description="Euler residuals at a fitted parameter and the cumulant moment fit.")
    _add_model(p)
    p.add_argument("--theta-from", required=True, help="JSON with a theta_hat entry (estimate/infer output)")
    p.add_argument("--input", required=True, help="series file (CSV or LSDE1)")
    p.add_argument("--phi", choices=["cos"], default="cos", help="moment function family")
    p.add_argument("--u", type=_floats, default=[1.0, 3.0, 5.0], help="frequencies, comma-separated")
    p.add_argument("-o", "--output", help="write the residual CSV here")
    p.add_argument("--json", dest="json_out", help="write the JSON summary here instead of stdout")
    p.set_defaults(func=cmd_residuals)

    p = sub.add_parser("infer", formatter_class=_formatter, help="joint estimates with intervals",
                       description="Fit, residual moments, bias correction, joint covariance, intervals.")
    _add_model(p)
    p.add_argument("--input", required=True, help="series file (CSV or LSDE1)")
    p.add_argument("--phi", choices=["cos"], default="cos", help="moment function family")
    p.add_argument("--u", type=_floats, default=[1.0, 3.0, 5.0], help="frequencies, comma-separated")
    p.add_argument("--level", type=_level, default=0.95, help="Wald interval level")
    p.add_argument("--tol", type=_positive, default=1e-10, help="root tolerance")
    p.add_argument("--multistart", type=_count, default=8, help="number of fallback starts")
    p.add_argument("-o", "--output", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("study", formatter_class=_formatter, help="replicated Monte Carlo study",
                       description="Run a replicated study from a TOML config or a bundled name "
                                   "(table1, table2, table3).")
    p.add_argument("--config", required=True, help="TOML file or bundled config name")
    p.add_argument("--outdir", default="study-out", help="directory for table.* and records.csv")
    p.add_argument("--workers", type=_count, help="worker processes (overrides the config)")
    p.add_argument("--replications", type=_count, help="replications per row (overrides the config)")
    p.add_argument("--seed", type=_seed, help="base seed (overrides the config)")
    p.add_argument("--format", choices=["markdown", "csv", "json"], default="markdown",
                   help="table format echoed to stdout")
    p.add_argument("--dry-run", action="store_true", help="validate the config and print the plan")
    p.set_defaults(func=cmd_study)
    return parser


def _emit_json(obj, path) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _theta(model, alpha, gamma) -> np.ndarray:
    if len(alpha) != model.p_alpha or len(gamma) != model.p_gamma:
        raise UsageError(f"model {model.name} takes {model.p_alpha} alpha and {model.p_gamma} gamma value(s)")
    theta = np.array(alpha + gamma, dtype=float)
    if not model.domain.contains(theta):
        raise UsageError(f"theta={theta.tolist()} lies outside the parameter box of {model.name}")
    return theta


def cmd_simulate(args) -> int:
    model = get_model(args.model)
    theta = _theta(model, args.alpha, args.gamma)
    try:
        driver = make_driver(args.driver, delta=args.delta, rate=args.rate)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    n = int(round(args.T / args.h))
    if n < 1 or abs(n * args.h - args.T) >= 1e-9:
        raise UsageError(f"--T {args.T} is not an integer multiple of --h {args.h}")
    plan = SimulationPlan(model, theta, driver, n=n, h=args.h, fine_factor=args.fine_factor,
                          x0=args.x0, seed=args.seed)
    write_series(simulate_path(plan), args.output)
    return EXIT_OK


def cmd_estimate(args) -> int:
    model = get_model(args.model)
    obs = read_series(args.input)
    fit = fit_gqmle(model, obs, tol=args.tol, multistart=args.multistart)
    _emit_json(fit.to_dict(), args.output)
    return EXIT_OK if fit.converged else EXIT_RUNTIME


def _phi(args):
    return builtin_phi_cos(args.u)


def cmd_residuals(args) -> int:
    model = get_model(args.model)
    try:
        theta = np.asarray(json.loads(Path(args.theta_from).read_text())["theta_hat"], dtype=float)
    except KeyError:
        raise LevySDEError(f"{args.theta_from} has no theta_hat entry") from None
    obs = read_series(args.input)
    phi = _phi(args)
    res = euler_residuals(model, obs, theta)
    if args.output:
        lines = ["j,delta"] + [f"{j},{d:.17g}" for j, d in enumerate(res.residuals, start=1)]
        Path(args.output).write_text("\n".join(lines) + "\n")
    summary = {
        "kappa_hat": moment_estimate(res, phi).tolist(),
        "zeta_hat": zeta_estimate(res, phi).tolist(),
        "b_hat": bias_matrix(res, model, obs, theta, phi).tolist(),
    }
    _emit_json(summary, args.json_out)
    return EXIT_OK


def cmd_infer(args) -> int:
    model = get_model(args.model)
    obs = read_series(args.input)
    fit = fit_gqmle(model, obs, tol=args.tol, multistart=args.multistart)
    if not fit.converged:
        raise LevySDEError(f"quasi-likelihood fit did not converge (|G|={fit.objective:.3g}, "
                           f"boundary={fit.on_boundary})")
    report = joint_fit(model, obs, _phi(args), level=args.level, gqmle=fit)
    _emit_json(report.to_dict(), args.output)
    return EXIT_OK


def _load_config(name: str) -> ExperimentConfig:
    path = Path(name)
    if not path.is_file():
        try:
            path = bundled_config_path(name)
        except FileNotFoundError:
            raise UsageError(f"config {name!r} is neither a file nor a bundled config") from None
    try:
        return ExperimentConfig.from_toml(path)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid config {path}: {exc}") from None


def cmd_study(args) -> int:
    config = _load_config(args.config)
    overrides = {k: v for k, v in (("workers", args.workers), ("replications", args.replications),
                                   ("base_seed", args.seed)) if v is not None}
    if overrides:
        try:
            config = replace(config, **overrides)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if args.dry_run:
        _emit_json({"config": config.to_dict(), "plan": config.plan()}, None)
        return EXIT_OK
    table, records = run_study(config, return_records=True)
    write_study_outputs(table, records, args.outdir)
    sys.stdout.write(emit_table(table, args.format))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"levysde {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LevySDEError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"levysde {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
