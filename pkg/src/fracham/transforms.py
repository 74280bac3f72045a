"""Canonical transformations, gauge relation and Hamilton-Jacobi residual.

The transformations are written in the bar variables ``qbar_i(t)``, the
running integral from ``a`` of the combined Caputo velocity of ``q_i`` (so
``qbar_i(a) = 0``), and likewise ``Qbar_i`` for the new coordinates.
Generating functions are resolved along trajectories by substituting the
sampled bar variables and momenta; nothing here solves for them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import expr as ex
from .dynamics import velocities
from .grid import GridFn, classical_derivative, cumulative_integral
from .model import GeneratingFunction, HamiltonianSpec, Trajectory
from .report import ALGEBRAIC_TOL, ResidualReport

__all__ = [
    "TransformPair",
    "BarVariables",
    "bar_variables",
    "bar_of",
    "verify_trans1",
    "verify_trans2",
    "gauge_residual",
    "hj_residual",
    "second_kind_from_first",
]


@dataclass(frozen=True, eq=False)
class TransformPair:
    """Old canonical variables ``(q, p)`` and new ones ``(Q, P)`` on one grid."""

    old: Trajectory
    new: Trajectory

    def __post_init__(self):
        if self.old.grid != self.new.grid:
            raise ValueError("old and new trajectories must share a grid")
        if self.old.n_coords != self.new.n_coords:
            raise ValueError("old and new trajectories must have the same coordinate count")
        if tuple(self.old.orders) != tuple(self.new.orders):
            raise ValueError("new coordinates must carry the same orders as the old ones")
        if self.old.p is None or self.new.p is None:
            raise ValueError("both trajectories of a transformation need momenta")

    @property
    def grid(self):
        return self.old.grid

    @property
    def n_coords(self) -> int:
        return self.old.n_coords


@dataclass(frozen=True, eq=False)
class BarVariables:
    qbar: np.ndarray
    Qbar: np.ndarray


def bar_of(traj: Trajectory) -> np.ndarray:
    """``qbar_i = int_a^t CD q_i``, shape ``(N, n+1)``."""
    v = velocities(traj)
    return np.array([cumulative_integral(GridFn(traj.grid, row)).values for row in v])


def bar_variables(pair: TransformPair) -> BarVariables:
    return BarVariables(bar_of(pair.old), bar_of(pair.new))


def second_kind_from_first(F1: GeneratingFunction) -> GeneratingFunction:
    """``F2 = F1 + sum_i P_i Qbar_i`` with ``Qbar`` kept as a bound variable.

    Along a pair satisfying the first-kind relations ``-P = dF1/dQbar``, the
    partials of this expression at fixed ``Qbar`` equal those of the true
    ``F2(t, qbar, P)`` (envelope argument), so it can be checked directly.
    """
    if F1.kind != 1:
        raise ValueError("expected a first-kind generating function")
    body = F1.body
    for i in range(1, F1.n_coords + 1):
        body = ex.add(body, ex.mul(ex.Var(f"P{i}"), ex.Var(f"Qbar{i}")))
    return GeneratingFunction(2, F1.n_coords, body, implicit_qbar=True)


def _bindings(pair: TransformPair, bars: BarVariables) -> dict:
    b = {"t": pair.grid.nodes}
    for i in range(pair.n_coords):
        k = i + 1
        b[f"qbar{k}"] = bars.qbar[i]
        b[f"Qbar{k}"] = bars.Qbar[i]
        b[f"P{k}"] = pair.new.p[i]
    return b


def _ham_on(H: HamiltonianSpec, traj: Trajectory) -> np.ndarray:
    b = {"t": traj.grid.nodes}
    for i in range(traj.n_coords):
        b[f"q{i + 1}"] = traj.q[i]
        b[f"p{i + 1}"] = traj.p[i]
    return _grid_eval(H.body, b, traj.grid.n + 1)


def _grid_eval(e: ex.Expr, b, size: int) -> np.ndarray:
    return np.array(np.broadcast_to(ex.evaluate(e, b), (size,)), dtype=float)


def _check_specs(pair: TransformPair, *specs):
    for s in specs:
        if s.n_coords != pair.n_coords:
            raise ValueError("specification coordinate count does not match the pair")


def verify_trans1(
    F1: GeneratingFunction,
    pair: TransformPair,
    H: HamiltonianSpec,
    K: HamiltonianSpec,
    tol: float = ALGEBRAIC_TOL,
) -> ResidualReport:
    """Residuals of ``p = dF1/dqbar``, ``-P = dF1/dQbar`` and ``dF1/dt = K - H``."""
    if F1.kind != 1:
        raise ValueError("verify_trans1 needs a first-kind generating function")
    _check_specs(pair, F1, H, K)
    bars = bar_variables(pair)
    b = _bindings(pair, bars)
    grid, size = pair.grid, pair.grid.n + 1
    res = {}
    for i in range(pair.n_coords):
        k = i + 1
        dq = _grid_eval(ex.diff(F1.body, f"qbar{k}"), b, size)
        dQ = _grid_eval(ex.diff(F1.body, f"Qbar{k}"), b, size)
        res[f"p{k}"] = GridFn(grid, pair.old.p[i] - dq)
        res[f"P{k}"] = GridFn(grid, -pair.new.p[i] - dQ)
    dt = _grid_eval(ex.diff(F1.body, "t"), b, size)
    res["t"] = GridFn(grid, dt - (_ham_on(K, pair.new) - _ham_on(H, pair.old)))
    return ResidualReport.build(res, tol)


def verify_trans2(
    F2: GeneratingFunction,
    pair: TransformPair,
    H: HamiltonianSpec,
    K: HamiltonianSpec,
    tol: float = ALGEBRAIC_TOL,
) -> ResidualReport:
    """Residuals of ``p = dF2/dqbar``, ``Qbar = dF2/dP`` and ``dF2/dt = K - H``."""
    if F2.kind != 2:
        raise ValueError("verify_trans2 needs a second-kind generating function")
    _check_specs(pair, F2, H, K)
    bars = bar_variables(pair)
    b = _bindings(pair, bars)
    grid, size = pair.grid, pair.grid.n + 1
    res = {}
    for i in range(pair.n_coords):
        k = i + 1
        dq = _grid_eval(ex.diff(F2.body, f"qbar{k}"), b, size)
        dP = _grid_eval(ex.diff(F2.body, f"P{k}"), b, size)
        res[f"p{k}"] = GridFn(grid, pair.old.p[i] - dq)
        res[f"Qbar{k}"] = GridFn(grid, bars.Qbar[i] - dP)
    dt = _grid_eval(ex.diff(F2.body, "t"), b, size)
    res["t"] = GridFn(grid, dt - (_ham_on(K, pair.new) - _ham_on(H, pair.old)))
    return ResidualReport.build(res, tol)


def gauge_residual(
    F: GeneratingFunction,
    pair: TransformPair,
    H: HamiltonianSpec,
    K: HamiltonianSpec,
    tol: float | None = None,
) -> ResidualReport:
    """Total-derivative relation between the old and new action integrands,

        dF1/dt + sum P CD Q - K - (sum p CD q - H),

    with ``F1 = F2 - sum P Qbar`` when a second-kind function is given.
    ``dF1/dt`` is the finite-difference derivative (:func:`classical_derivative`)
    of F1 sampled along the pair; the default tolerance is ``10 h**2``.
    """
    _check_specs(pair, F, H, K)
    grid, size = pair.grid, pair.grid.n + 1
    bars = bar_variables(pair)
    b = _bindings(pair, bars)
    f1 = _grid_eval(F.body, b, size)
    if F.kind == 2:
        f1 = f1 - np.sum(pair.new.p * bars.Qbar, axis=0)
    r = classical_derivative(GridFn(grid, f1)).values.copy()
    r += np.sum(pair.new.p * velocities(pair.new), axis=0) - _ham_on(K, pair.new)
    r -= np.sum(pair.old.p * velocities(pair.old), axis=0) - _ham_on(H, pair.old)
    if tol is None:
        tol = 10.0 * grid.h**2
    return ResidualReport.build({"gauge": GridFn(grid, r)}, tol)


def hj_residual(
    H: HamiltonianSpec,
    F2: GeneratingFunction,
    traj: Trajectory,
    P_values: Sequence[float],
    tol: float = ALGEBRAIC_TOL,
) -> ResidualReport:
    """``H(t, q, dF2/dqbar) + dF2/dt`` along ``traj`` with the new momenta held at ``P_values``."""
    if F2.kind != 2:
        raise ValueError("the Hamilton-Jacobi residual needs a second-kind generating function")
    n = traj.n_coords
    P = np.asarray(P_values, dtype=float).reshape(-1)
    if len(P) != n or H.n_coords != n or F2.n_coords != n:
        raise ValueError("coordinate counts of H, F2, trajectory and P must agree")
    size = traj.grid.n + 1
    qbar = bar_of(traj)
    bf = {"t": traj.grid.nodes}
    for i in range(n):
        bf[f"qbar{i + 1}"] = qbar[i]
        bf[f"P{i + 1}"] = np.full(size, P[i])
    bh = {"t": traj.grid.nodes}
    for i in range(n):
        bh[f"q{i + 1}"] = traj.q[i]
        bh[f"p{i + 1}"] = _grid_eval(ex.diff(F2.body, f"qbar{i + 1}"), bf, size)
    r = _grid_eval(H.body, bh, size) + _grid_eval(ex.diff(F2.body, "t"), bf, size)
    return ResidualReport.build({"HJ": GridFn(traj.grid, r)}, tol)
