"""Command-line front end: ``fracham <command> <config> ...``.

Exit codes: 0 every requested check passed, 1 a check failed, 2 usage or
configuration error, 3 numerical failure (for example non-convergence or an
evaluation outside a function's domain).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import expr as ex
from .config import ConfigError, ProblemConfig, load_config
from .dynamics import (
    canonical_residual,
    el_residual,
    hamiltonian_symbolic,
    is_constant_of_motion,
    lagrangian_from_momenta,
)
from .errors import NumericalError
from .fracops import (
    caputo_left,
    caputo_right,
    combined_caputo,
    combined_rl,
    rl_left,
    rl_right,
)
from .grid import gridfn_to_csv, sample
from .io import atomic_write, report_to_csv, trajectory_from_csv, trajectory_to_csv
from .model import GeneratingFunction, HamiltonianSpec, Trajectory
from .report import ResidualReport, discretization_tolerance
from .solver import solve_canonical, solve_trajectory
from .transforms import TransformPair, gauge_residual, hj_residual, verify_trans1, verify_trans2

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3

OPERATORS = {
    # name: (operator, which order it reads)
    "cl": (caputo_left, "alpha"),
    "cr": (caputo_right, "beta"),
    "rll": (rl_left, "beta"),
    "rlr": (rl_right, "alpha"),
    "cc": (combined_caputo, None),
    "crl": (combined_rl, None),
}


class UsageError(ValueError):
    pass


def _header(cfg: ProblemConfig, command: str) -> str:
    return "\n".join(
        [
            f"# fracham {__version__} {command}",
            f"# config: {cfg.source}",
            *(f"#   {line}" for line in cfg.echo.splitlines()),
        ]
    )


def _outdir(cfg: ProblemConfig, args) -> Path:
    return Path(args.output) if getattr(args, "output", None) else cfg.output_dir


def _coord(cfg: ProblemConfig, i: int) -> int:
    if not 1 <= i <= cfg.n_coords:
        raise UsageError(f"--coord {i} out of range 1..{cfg.n_coords}")
    return i


def _read_trajectory(path: str, cfg: ProblemConfig) -> Trajectory:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise UsageError(f"cannot read trajectory {path}: {err.strerror}") from None
    try:
        return trajectory_from_csv(text, cfg.orders, cfg.grid)
    except ValueError as err:
        raise UsageError(f"{path}: {err}") from None


def _emit_report(cfg, args, command: str, name: str, report: ResidualReport, extra=()) -> int:
    out = _outdir(cfg, args)
    csv_path = atomic_write(out / f"{name}.csv", report_to_csv(report))
    text = "\n".join([_header(cfg, command), *extra, report.describe(), f"# residuals: {csv_path}"])
    atomic_write(out / f"{name}.txt", text + "\n")
    print(text)
    return EXIT_OK if report.passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# Commands


def derive_text(cfg: ProblemConfig) -> str:
    """Symbolic partials, momenta, Euler-Lagrange equations and Hamiltonian."""
    L = cfg.require_lagrangian()
    lines = [_header(cfg, "derive"), f"L = {ex.to_string(L.body)}"]
    for i in range(1, L.n_coords + 1):
        lines.append(f"dL/dq{i} = {ex.to_string(ex.simplify(ex.diff(L.body, f'q{i}')))}")
    for i in range(1, L.n_coords + 1):
        lines.append(f"p{i} = {ex.to_string(ex.simplify(ex.diff(L.body, f'v{i}')))}")
    for i in range(1, L.n_coords + 1):
        lq = ex.simplify(ex.diff(L.body, f"q{i}"))
        lv = ex.simplify(ex.diff(L.body, f"v{i}"))
        op = f"D[beta{i},alpha{i};1-gamma{i}]( {ex.to_string(lv)} )"
        lhs = op if ex.is_zero(lq) else f"{ex.to_string(lq)} + {op}"
        lines.append(f"EL[{i}]: {lhs} = 0")
    H = hamiltonian_symbolic(L)
    lines.append(f"H = {ex.to_string(H.body)}" if H is not None else "H = unavailable (non-quadratic momenta)")
    return "\n".join(lines)


def cmd_derive(cfg: ProblemConfig, args) -> int:
    text = derive_text(cfg)
    if getattr(args, "output", None):
        atomic_write(Path(args.output) / "derive.txt", text + "\n")
    print(text)
    return EXIT_OK


def cmd_solve(cfg: ProblemConfig, args) -> int:
    bd = cfg.require_boundary()
    if cfg.method == "canonical":
        result = solve_canonical(cfg.require_hamiltonian(), bd, cfg.grid, cfg.orders, cfg.solver)
    else:
        result = solve_trajectory(cfg.require_lagrangian(), bd, cfg.grid, cfg.solver)
    out = _outdir(cfg, args)
    traj_path = atomic_write(out / "trajectory.csv", trajectory_to_csv(result.trajectory))
    summary = {"version": __version__, **result.summary(), "config": cfg.echo}
    atomic_write(out / "summary.txt", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if result.report is not None:
        atomic_write(out / "solve_residual.csv", report_to_csv(result.report))
    print(_header(cfg, "solve"))
    print(f"method = {result.method}")
    print(f"iterations = {result.iterations}")
    print(f"final_norm = {result.final_norm:.17g}")
    if result.action is not None:
        print(f"action = {result.action:.17g}")
    if result.restart_disagreement is not None:
        print(f"restart_disagreement = {result.restart_disagreement:.17g}")
    if result.report is not None:
        print("residual audit (informational):")
        print(result.report.describe())
    print(f"# trajectory: {traj_path}")
    return EXIT_OK


def cmd_check(cfg: ProblemConfig, args) -> int:
    traj = _read_trajectory(args.trajectory, cfg)
    tol = discretization_tolerance(cfg.grid, cfg.orders, cfg.checks.discretization_constant)
    if args.kind == "el":
        report = el_residual(cfg.require_lagrangian(), traj, tol)
    elif args.kind == "canonical":
        if traj.p is None:
            raise UsageError("check canonical needs momenta columns p1..pN in the trajectory")
        report = canonical_residual(cfg.require_hamiltonian(), traj, tol)
    else:
        if not args.expr:
            raise UsageError("check constant needs --expr")
        C = ex.parse(args.expr, cfg.n_coords)
        if traj.p is None:
            if cfg.lagrangian is None:
                raise UsageError("trajectory has no momenta and no lagrangian is configured")
            traj = lagrangian_from_momenta(cfg.lagrangian, traj)
        i = _coord(cfg, args.coord)
        ctol = cfg.checks.constant_tolerance
        if ctol is None:
            ctol = 10.0 * cfg.solver.gradient_tolerance
        H = None
        try:
            H = cfg.require_hamiltonian()
        except ConfigError:
            pass
        report = is_constant_of_motion(C, traj, cfg.orders[i - 1], ctol, hamiltonian=H, trajectory_tol=tol)
    return _emit_report(cfg, args, f"check {args.kind}", f"check_{args.kind}", report)


def cmd_transform(cfg: ProblemConfig, args) -> int:
    H = cfg.require_hamiltonian()
    K = H if args.k is None else HamiltonianSpec.from_text(args.k, cfg.orders)
    F = GeneratingFunction.from_text(args.f, args.kind, cfg.n_coords)
    old = _read_trajectory(args.old, cfg)
    new = _read_trajectory(args.new, cfg)
    pair = TransformPair(old, new)
    verify = verify_trans1 if args.kind == 1 else verify_trans2
    identity = verify(F, pair, H, K, cfg.checks.algebraic_tolerance)
    gauge = gauge_residual(F, pair, H, K, cfg.checks.gauge_constant * cfg.grid.h**2)
    code = _emit_report(cfg, args, "transform", f"transform{args.kind}", identity)
    code = max(code, _emit_report(cfg, args, "transform gauge", "gauge", gauge))
    return code


def cmd_hj(cfg: ProblemConfig, args) -> int:
    H = cfg.require_hamiltonian()
    F2 = GeneratingFunction.from_text(args.f2, 2, cfg.n_coords)
    traj = _read_trajectory(args.trajectory, cfg)
    try:
        P = [float(x) for x in args.P.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--P {args.P!r} is not a comma-separated list of numbers") from None
    if len(P) != cfg.n_coords:
        raise UsageError(f"--P has {len(P)} values, expected N = {cfg.n_coords}")
    report = hj_residual(H, F2, traj, P, cfg.checks.algebraic_tolerance)
    return _emit_report(cfg, args, "hj", "hj", report)


def cmd_operator(cfg: ProblemConfig, args) -> int:
    fn = ex.parse(args.fn, cfg.n_coords)
    extra = sorted(v for v in ex.free_vars(fn) if v != "t")
    if extra:
        raise UsageError(f"--fn may only use t, found {extra}")
    f = sample(fn, cfg.grid)
    order = cfg.orders[_coord(cfg, args.coord) - 1]
    op, which = OPERATORS[args.which]
    result = op(f, order if which is None else getattr(order, which))
    text = gridfn_to_csv(result)
    if args.output:
        atomic_write(args.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracham", description="Combined-Caputo fractional variational mechanics toolkit."
    )
    parser.add_argument("--version", action="version", version=f"fracham {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="INI problem file")
    common.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override a config value (repeatable, last one wins)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("derive", parents=[common], help="print symbolic momenta, EL equations and H")
    p.add_argument("-o", "--output", help="also write derive.txt into this directory")
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("solve", parents=[common], help="solve the boundary-value problem")
    p.add_argument("-o", "--output", help="output directory (default: [output] directory)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("check", help="residual checks on a trajectory CSV")
    p.add_argument("kind", choices=["el", "canonical", "constant"])
    p.add_argument("config", help="INI problem file")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--expr", help="candidate constant of motion (check constant)")
    p.add_argument("--coord", type=int, default=1, help="coordinate whose orders apply (default 1)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("transform", parents=[common], help="verify a canonical transformation")
    p.add_argument("--kind", type=int, choices=[1, 2], required=True)
    p.add_argument("--f", required=True, help="generating function F1 or F2")
    p.add_argument("--old", required=True, help="trajectory CSV with q, p")
    p.add_argument("--new", required=True, help="trajectory CSV with Q, P")
    p.add_argument("--k", help="new Hamiltonian K (default: H)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("hj", parents=[common], help="Hamilton-Jacobi residual")
    p.add_argument("--f2", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--P", required=True, help="comma-separated constant new momenta")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_hj)

    p = sub.add_parser("operator", parents=[common], help="apply a fractional operator to f(t)")
    p.add_argument("--fn", required=True, help="expression in t")
    p.add_argument("--which", required=True, choices=sorted(OPERATORS))
    p.add_argument("--coord", type=int, default=1)
    p.add_argument("-o", "--output", help="write the GridFn CSV here instead of stdout")
    p.set_defaults(func=cmd_operator)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_USAGE if err.code not in (0, None) else EXIT_OK
    try:
        cfg = load_config(args.config, overrides=args.set, environ=os.environ)
        return args.func(cfg, args)
    except (NumericalError, ex.EvalDomainError, np.linalg.LinAlgError) as err:
        print(f"fracham: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, UsageError, ValueError, OSError) as err:
        print(f"fracham: error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
