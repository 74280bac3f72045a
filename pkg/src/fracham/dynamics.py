"""Momenta, Legendre transform and residuals of the combined fractional dynamics.

Sign convention for every residual: left-hand side minus right-hand side of
the identity being checked.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from . import expr as ex
from .errors import ConvergenceError, DegenerateError
from .fracops import FracOrder, combined_caputo, combined_rl
from .grid import GridFn, classical_derivative
from .model import HamiltonianSpec, LagrangianSpec, Trajectory
from .report import ResidualReport, discretization_tolerance

__all__ = [
    "velocities",
    "momenta",
    "legendre_pointwise",
    "hamiltonian_symbolic",
    "el_residual",
    "canonical_residual",
    "partial_t_check",
    "dH_dt_diagnostic",
    "is_constant_of_motion",
    "cyclic_momentum_check",
    "NotCyclicError",
    "sample_along",
    "lagrangian_from_momenta",
]

DET_FLOOR = 1e-10
NEWTON_MAX_ITER = 50
BACKTRACK_MAX = 30


class NotCyclicError(ValueError):
    pass


def _check_orders(spec, traj: Trajectory):
    if spec.n_coords != traj.n_coords:
        raise ValueError(f"model has {spec.n_coords} coordinates, trajectory {traj.n_coords}")
    if tuple(spec.orders) != tuple(traj.orders):
        raise ValueError("model orders do not match trajectory orders")


def velocities(traj: Trajectory) -> np.ndarray:
    """Combined Caputo derivative of every coordinate, shape ``(N, n+1)``."""
    return np.array(
        [combined_caputo(traj.q_fn(i), o).values for i, o in enumerate(traj.orders)]
    )


def _bindings(traj: Trajectory, v: np.ndarray | None = None, p: np.ndarray | None = None):
    b = {"t": traj.grid.nodes}
    for i in range(traj.n_coords):
        b[f"q{i + 1}"] = traj.q[i]
        if v is not None:
            b[f"v{i + 1}"] = v[i]
        if p is not None:
            b[f"p{i + 1}"] = p[i]
    return b


def _on_grid(e: ex.Expr, bindings, size: int) -> np.ndarray:
    return np.array(np.broadcast_to(ex.evaluate(e, bindings), (size,)), dtype=float)


def sample_along(e: ex.Expr, traj: Trajectory) -> GridFn:
    """Evaluate an expression in ``t, q_i, p_i`` (and ``v_i``) along a trajectory."""
    v = velocities(traj) if any(ex.var_kind(n)[0] == "v" for n in ex.free_vars(e)) else None
    b = _bindings(traj, v=v, p=traj.p)
    return GridFn(traj.grid, _on_grid(e, b, traj.grid.n + 1))


def momenta(L: LagrangianSpec, traj: Trajectory) -> list[GridFn]:
    """``p_i = dL/dv_i`` evaluated nodewise along ``traj``."""
    _check_orders(L, traj)
    v = velocities(traj)
    b = _bindings(traj, v=v)
    size = traj.grid.n + 1
    return [
        GridFn(traj.grid, _on_grid(ex.diff(L.body, name), b, size))
        for name in L.names("v")
    ]


# ---------------------------------------------------------------------------
# Legendre transform


def _point_bindings(L, t, q, v):
    b = {"t": float(t)}
    for i in range(L.n_coords):
        b[f"q{i + 1}"] = float(q[i])
        b[f"v{i + 1}"] = float(v[i])
    return b


def legendre_pointwise(
    L: LagrangianSpec, t: float, q: Sequence[float], p: Sequence[float]
) -> tuple[float, np.ndarray]:
    """Solve ``p = dL/dv(t, q, v)`` for ``v`` by Newton's method; return ``(H, v)``.

    Raises :class:`DegenerateError` when the v-Hessian determinant drops below
    1e-10 in magnitude and :class:`ConvergenceError` after 50 iterations.
    """
    n = L.n_coords
    q = np.asarray(q, dtype=float).reshape(n)
    p = np.asarray(p, dtype=float).reshape(n)
    vnames = L.names("v")
    grad = [ex.diff(L.body, name) for name in vnames]
    hess = [[ex.diff(g, name) for name in vnames] for g in grad]

    def residual(v):
        b = _point_bindings(L, t, q, v)
        return np.array([ex.evaluate(g, b) for g in grad], dtype=float) - p

    v = p.copy()
    r = residual(v)
    scale = max(1.0, float(np.max(np.abs(p))))
    for _ in range(NEWTON_MAX_ITER):
        # nondegeneracy is required at every iterate, the solution included
        b = _point_bindings(L, t, q, v)
        jac = np.array([[ex.evaluate(h, b) for h in row] for row in hess], dtype=float)
        det = np.linalg.det(jac)
        if not abs(det) >= DET_FLOOR:
            raise DegenerateError(
                f"momentum map is degenerate at t={t}: |det d2L/dv2| = {abs(det):.3g}"
            )
        if np.max(np.abs(r)) <= 1e-13 * scale:
            break
        step = np.linalg.solve(jac, -r)
        norm0 = np.linalg.norm(r)
        lam = 1.0
        for _ in range(BACKTRACK_MAX):
            try:
                r_new = residual(v + lam * step)
            except ex.EvalDomainError:
                r_new = None
            if r_new is not None and np.linalg.norm(r_new) <= (1 - 1e-4 * lam) * norm0:
                break
            lam *= 0.5
        else:
            raise ConvergenceError(f"Legendre backtracking failed at t={t}")
        v = v + lam * step
        r = r_new
    else:
        if np.max(np.abs(r)) > 1e-13 * scale:
            raise ConvergenceError(f"Legendre Newton did not converge at t={t}")
    lag = ex.evaluate(L.body, _point_bindings(L, t, q, v))
    return float(np.dot(p, v) - lag), v


def hamiltonian_symbolic(L: LagrangianSpec) -> HamiltonianSpec | None:
    """Closed-form Hamiltonian for Lagrangians quadratic in the velocities.

    Applies when every second v-partial folds to a constant and the constant
    Hessian is invertible; returns ``None`` otherwise.
    """
    vnames = L.names("v")
    grad = [ex.diff(L.body, name) for name in vnames]
    hess = [[ex.simplify(ex.diff(g, name)) for name in vnames] for g in grad]
    if not all(isinstance(h, ex.Const) for row in hess for h in row):
        return None
    a = np.array([[h.value for h in row] for row in hess])
    if abs(np.linalg.det(a)) < DET_FLOOR:
        return None
    a_inv = np.linalg.inv(a)
    a_inv[np.abs(a_inv) < 1e-15 * np.max(np.abs(a_inv))] = 0.0

    at_rest = {name: ex.ZERO for name in vnames}
    # L = c + b.v + v.A.v/2  =>  H = (p - b).A^-1.(p - b)/2 - c
    shifted = [ex.sub(ex.Var(f"p{i + 1}"), ex.substitute(g, at_rest)) for i, g in enumerate(grad)]
    c = ex.substitute(L.body, at_rest)
    terms: list[ex.Expr] = []
    n = L.n_coords
    for i in range(n):
        if a_inv[i, i] != 0.0:
            terms.append(ex.mul(ex.Const(0.5 * a_inv[i, i]), ex.power(shifted[i], ex.Const(2.0))))
        for j in range(i + 1, n):
            coef = a_inv[i, j] + a_inv[j, i]
            if coef != 0.0:
                terms.append(ex.mul(ex.Const(0.5 * coef), ex.mul(shifted[i], shifted[j])))
    body = ex.ZERO
    for term in terms:
        body = ex.add(body, term)
    body = ex.sub(body, c)
    return HamiltonianSpec(n, L.orders, body)


# ---------------------------------------------------------------------------
# Residuals


def _default_tol(traj: Trajectory) -> float:
    return discretization_tolerance(traj.grid, traj.orders)


def el_residual(L: LagrangianSpec, traj: Trajectory, tol: float | None = None) -> ResidualReport:
    """``dL/dq_i + D[beta_i, alpha_i; 1 - gamma_i](dL/dv_i)`` for each coordinate."""
    _check_orders(L, traj)
    v = velocities(traj)
    b = _bindings(traj, v=v)
    size = traj.grid.n + 1
    p = momenta(L, traj)
    residuals = {}
    for i, o in enumerate(traj.orders):
        lq = GridFn(traj.grid, _on_grid(ex.diff(L.body, f"q{i + 1}"), b, size))
        residuals[f"EL{i + 1}"] = lq + combined_rl(p[i], o)
    return ResidualReport.build(residuals, _default_tol(traj) if tol is None else tol)


def canonical_residual(
    H: HamiltonianSpec, traj: Trajectory, tol: float | None = None
) -> ResidualReport:
    """``dH/dp_i - CD q_i`` and ``dH/dq_i - D p_i`` for each coordinate."""
    _check_orders(H, traj)
    if traj.p is None:
        raise ValueError("canonical residual needs momenta on the trajectory")
    b = _bindings(traj, p=traj.p)
    size = traj.grid.n + 1
    residuals = {}
    for i, o in enumerate(traj.orders):
        hp = GridFn(traj.grid, _on_grid(ex.diff(H.body, f"p{i + 1}"), b, size))
        hq = GridFn(traj.grid, _on_grid(ex.diff(H.body, f"q{i + 1}"), b, size))
        residuals[f"r1_{i + 1}"] = hp - combined_caputo(traj.q_fn(i), o)
        residuals[f"r2_{i + 1}"] = hq - combined_rl(traj.p_fn(i), o)
    return ResidualReport.build(residuals, _default_tol(traj) if tol is None else tol)


def partial_t_check(
    L: LagrangianSpec,
    H: HamiltonianSpec,
    samples: Iterable[tuple[float, Sequence[float], Sequence[float]]],
) -> float:
    """Largest ``|dH/dt + dL/dt|`` over ``(t, q, p)`` samples, with v from the Legendre map."""
    if H.n_coords != L.n_coords:
        raise ValueError("Lagrangian and Hamiltonian have different coordinate counts")
    ht = ex.diff(H.body, "t")
    lt = ex.diff(L.body, "t")
    worst = 0.0
    for t, q, p in samples:
        _, v = legendre_pointwise(L, t, q, p)
        bh = {"t": float(t)}
        for i in range(H.n_coords):
            bh[f"q{i + 1}"] = float(q[i])
            bh[f"p{i + 1}"] = float(p[i])
        lhs = ex.evaluate(ht, bh)
        rhs = ex.evaluate(lt, _point_bindings(L, t, q, v))
        worst = max(worst, abs(lhs + rhs))
    return worst


def dH_dt_diagnostic(H: HamiltonianSpec, traj: Trajectory) -> tuple[GridFn, GridFn, GridFn]:
    """``(total, exchange, explicit)`` pieces of dH/dt along a trajectory.

    total    = d/dt H(t, q(t), p(t))                 (finite differences)
    exchange = sum_i CD q_i * dp_i/dt + D p_i * dq_i/dt
    explicit = dH/dt at fixed (q, p)
    """
    _check_orders(H, traj)
    if traj.p is None:
        raise ValueError("dH/dt diagnostic needs momenta")
    b = _bindings(traj, p=traj.p)
    size = traj.grid.n + 1
    h_along = GridFn(traj.grid, _on_grid(H.body, b, size))
    total = classical_derivative(h_along)
    exchange = GridFn(traj.grid, np.zeros(size))
    for i, o in enumerate(traj.orders):
        q, p = traj.q_fn(i), traj.p_fn(i)
        exchange = exchange + combined_caputo(q, o) * classical_derivative(p)
        exchange = exchange + combined_rl(p, o) * classical_derivative(q)
    explicit = GridFn(traj.grid, _on_grid(ex.diff(H.body, "t"), b, size))
    return total, exchange, explicit


def is_constant_of_motion(
    C: ex.Expr,
    traj: Trajectory,
    order: FracOrder,
    tol: float,
    hamiltonian: HamiltonianSpec | None = None,
    trajectory_tol: float | None = None,
) -> ResidualReport:
    """Test whether ``D[beta, alpha; 1 - gamma] C(t, q(t), p(t))`` vanishes.

    The verdict is only meaningful along solutions of the canonical equations;
    it is marked advisory unless ``hamiltonian`` is given and ``traj`` passes
    its canonical residual at ``trajectory_tol``.
    """
    for name in ex.free_vars(C):
        if ex.var_kind(name)[0] not in ("t", "q", "p"):
            raise ValueError(f"candidate constant may only use t, q, p; found {name!r}")
    c_along = sample_along(C, traj)
    residual = combined_rl(c_along, order)
    notes = []
    advisory = True
    if hamiltonian is not None:
        canon = canonical_residual(hamiltonian, traj, trajectory_tol)
        advisory = not canon.passed
        notes.append(
            f"trajectory canonical residual sup={canon.sup_norm:.3e} "
            f"({'pass' if canon.passed else 'fail'} at {canon.tolerance:.3g})"
        )
    else:
        notes.append("no Hamiltonian supplied; trajectory not audited")
    return ResidualReport.build({"D[C]": residual}, tol, advisory=advisory, notes=notes)


def cyclic_momentum_check(
    L: LagrangianSpec, traj: Trajectory, i: int, tol: float | None = None
) -> ResidualReport:
    """For a coordinate absent from L, check ``D p_i == 0`` along ``traj``.

    ``i`` is 1-based, matching the variable names.
    """
    if not 1 <= i <= L.n_coords:
        raise IndexError(f"coordinate {i} out of range 1..{L.n_coords}")
    dq = ex.simplify(ex.diff(L.body, f"q{i}"))
    if not ex.is_zero(dq):
        raise NotCyclicError(f"q{i} is not cyclic: dL/dq{i} = {dq}")
    p = momenta(L, traj)[i - 1]
    residual = combined_rl(p, traj.orders[i - 1])
    return ResidualReport.build(
        {f"Dp{i}": residual}, _default_tol(traj) if tol is None else tol
    )


def lagrangian_from_momenta(L: LagrangianSpec, traj: Trajectory) -> Trajectory:
    """``traj`` with its momenta replaced by ``dL/dv`` along it."""
    return traj.with_momenta(np.array([p.values for p in momenta(L, traj)]))

