"""Trajectory solvers.

``solve_trajectory`` minimises the trapezoid-discretised action over interior
node values with fixed endpoints (direct method), then by default refines the
minimizer with Newton's method onto the collocated Euler-Lagrange equations.
Near the endpoints the stationarity condition of the trapezoid action and the
collocated equations differ by a boundary layer that grows under refinement,
so the refinement is what makes the output an Euler-Lagrange solution node by
node; ``SolverConfig(refine=False)`` returns the bare minimizer.

``solve_canonical`` solves the combined canonical equations by damped Newton
collocation and serves as an independent cross-check of the Lagrangian route.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import expr as ex
from .dynamics import canonical_residual, el_residual, momenta
from .errors import ConvergenceError, DegenerateError, LineSearchError, NumericalError
from .fracops import FracOrder, combined_caputo, combined_caputo_matrix, combined_rl_matrix
from .grid import GridFn, UniformGrid, trapezoid_weights
from .model import HamiltonianSpec, LagrangianSpec, Trajectory
from .report import ResidualReport

__all__ = [
    "BoundaryData",
    "SolverConfig",
    "SolveResult",
    "discrete_action",
    "action_gradient",
    "action_hessian",
    "solve_trajectory",
    "solve_canonical",
    "initial_guess",
]

logger = logging.getLogger(__name__)

ARMIJO_C = 1e-4
MAX_HALVINGS = 50


@dataclass(frozen=True)
class BoundaryData:
    qa: tuple[float, ...]
    qb: tuple[float, ...]

    def __post_init__(self):
        qa = tuple(float(x) for x in np.atleast_1d(self.qa))
        qb = tuple(float(x) for x in np.atleast_1d(self.qb))
        if len(qa) != len(qb):
            raise ValueError("qa and qb must have the same length")
        if not all(np.isfinite(qa + qb)):
            raise ValueError("boundary values must be finite")
        object.__setattr__(self, "qa", qa)
        object.__setattr__(self, "qb", qb)

    @property
    def n_coords(self) -> int:
        return len(self.qa)


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 500
    gradient_tolerance: float = 1e-9
    residual_tolerance: float = 1e-9
    # "linear" or an expression in t (as text or Expr) used for every coordinate
    initial_guess: Union[str, ex.Expr] = "linear"
    seed: int = 0
    restarts: int = 0
    # Newton refinement of the minimizer onto the collocated Euler-Lagrange equations
    refine: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (self.gradient_tolerance > 0 and self.residual_tolerance > 0):
            raise ValueError("tolerances must be positive")
        if self.restarts < 0:
            raise ValueError("restarts must be >= 0")


@dataclass
class SolveResult:
    trajectory: Trajectory
    iterations: int
    converged: bool
    final_norm: float
    action: float | None = None
    report: ResidualReport | None = None
    action_history: list[float] = field(default_factory=list)
    restart_disagreement: float | None = None
    method: str = ""
    refine_iterations: int = 0
    el_norm: float | None = None

    def summary(self) -> dict:
        out = {
            "method": self.method,
            "iterations": self.iterations,
            "converged": self.converged,
            "final_norm": self.final_norm,
        }
        if self.action is not None:
            out["action"] = self.action
        if self.el_norm is not None:
            out["refine_iterations"] = self.refine_iterations
            out["el_norm"] = self.el_norm
        if self.report is not None:
            out["residual_sup_norm"] = self.report.sup_norm
            out["residual_pass"] = self.report.passed
        if self.restart_disagreement is not None:
            out["restart_disagreement"] = self.restart_disagreement
        return out


def initial_guess(grid: UniformGrid, bd: BoundaryData, cfg: SolverConfig) -> np.ndarray:
    t = grid.nodes
    qa, qb = np.array(bd.qa)[:, None], np.array(bd.qb)[:, None]
    if isinstance(cfg.initial_guess, str) and cfg.initial_guess == "linear":
        return qa + (qb - qa) * ((t - grid.a) / (grid.b - grid.a))[None, :]
    guess = cfg.initial_guess
    if isinstance(guess, str):
        guess = ex.parse(guess, bd.n_coords)
    vals = np.broadcast_to(ex.evaluate(guess, {"t": t}), t.shape)
    q = np.tile(vals, (bd.n_coords, 1)).astype(float)
    q[:, 0], q[:, -1] = bd.qa, bd.qb
    return q


# ---------------------------------------------------------------------------
# Direct method


class _Action:
    """Discrete action and its exact derivatives as functions of all node values."""

    def __init__(self, L: LagrangianSpec, grid: UniformGrid):
        self.L = L
        self.grid = grid
        self.w = trapezoid_weights(grid)
        self.mats = [combined_caputo_matrix(grid, o) for o in L.orders]
        self.dmats = [combined_rl_matrix(grid, o) for o in L.orders]
        n = L.n_coords
        self.qn = L.names("q")
        self.vn = L.names("v")
        body = L.body
        self.lq = [ex.diff(body, x) for x in self.qn]
        self.lv = [ex.diff(body, x) for x in self.vn]
        self.second = {}
        for i in range(n):
            for j in range(n):
                self.second["qq", i, j] = ex.diff(self.lq[i], self.qn[j])
                self.second["qv", i, j] = ex.diff(self.lq[i], self.vn[j])
                self.second["vv", i, j] = ex.diff(self.lv[i], self.vn[j])

    def bindings(self, q: np.ndarray):
        # the function form annihilates constants exactly and matches momenta()
        v = np.array(
            [combined_caputo(GridFn(self.grid, q[i]), o).values for i, o in enumerate(self.L.orders)]
        )
        b = {"t": self.grid.nodes}
        for i in range(self.L.n_coords):
            b[self.qn[i]] = q[i]
            b[self.vn[i]] = v[i]
        return b

    def _eval(self, e, b):
        return np.broadcast_to(ex.evaluate(e, b), self.grid.nodes.shape)

    def value(self, q: np.ndarray) -> float:
        b = self.bindings(q)
        return float(np.dot(self.w, self._eval(self.L.body, b)))

    def gradient(self, q: np.ndarray) -> np.ndarray:
        b = self.bindings(q)
        g = np.empty_like(q)
        for i, m in enumerate(self.mats):
            g[i] = self.w * self._eval(self.lq[i], b) + m.T @ (self.w * self._eval(self.lv[i], b))
        return g

    def hessian(self, q: np.ndarray) -> np.ndarray:
        """Full Hessian, shape ``(N*(n+1), N*(n+1))``, coordinate-major."""
        b = self.bindings(q)
        n, size = self.L.n_coords, self.grid.n + 1
        out = np.zeros((n * size, n * size))
        for i in range(n):
            ci = self.mats[i]
            for j in range(n):
                cj = self.mats[j]
                qq = self.w * self._eval(self.second["qq", i, j], b)
                qv = self.w * self._eval(self.second["qv", i, j], b)
                vq = self.w * self._eval(self.second["qv", j, i], b)
                vv = self.w * self._eval(self.second["vv", i, j], b)
                block = np.diag(qq) + qv[:, None] * cj + ci.T * vq[None, :] + ci.T @ (vv[:, None] * cj)
                out[i * size:(i + 1) * size, j * size:(j + 1) * size] = block
        return out


    def el(self, q: np.ndarray) -> np.ndarray:
        """Collocated Euler-Lagrange residuals at interior nodes, shape ``(N, n-1)``."""
        b = self.bindings(q)
        return np.array(
            [
                (self._eval(self.lq[i], b) + d @ self._eval(self.lv[i], b))[1:-1]
                for i, d in enumerate(self.dmats)
            ]
        )

    def el_jacobian(self, q: np.ndarray) -> np.ndarray:
        """Jacobian of :meth:`el` w.r.t. interior node values (coordinate-major)."""
        b = self.bindings(q)
        n, size = self.L.n_coords, self.grid.n + 1
        m = size - 2
        inner = slice(1, size - 1)
        out = np.zeros((n * m, n * m))
        for i in range(n):
            d = self.dmats[i]
            for j in range(n):
                cj = self.mats[j]
                qq = self._eval(self.second["qq", i, j], b)
                qv = self._eval(self.second["qv", i, j], b)
                vq = self._eval(self.second["qv", j, i], b)
                vv = self._eval(self.second["vv", i, j], b)
                block = np.diag(qq) + qv[:, None] * cj + d * vq[None, :] + d @ (vv[:, None] * cj)
                out[i * m:(i + 1) * m, j * m:(j + 1) * m] = block[inner, inner]
        return out


def _full(q_interior: np.ndarray, bd: BoundaryData, size: int) -> np.ndarray:
    n = bd.n_coords
    q = np.empty((n, size))
    q[:, 0], q[:, -1] = bd.qa, bd.qb
    q[:, 1:-1] = q_interior.reshape(n, size - 2)
    return q


def discrete_action(L: LagrangianSpec, traj: Trajectory) -> float:
    """Trapezoid quadrature of ``L(t, q, CD q)`` over the grid."""
    if tuple(L.orders) != tuple(traj.orders):
        raise ValueError("Lagrangian orders do not match trajectory orders")
    return _Action(L, traj.grid).value(np.asarray(traj.q))


def action_gradient(L: LagrangianSpec, traj: Trajectory) -> np.ndarray:
    """Gradient of :func:`discrete_action` w.r.t. the interior node values, shape ``(N, n-1)``."""
    return _Action(L, traj.grid).gradient(np.asarray(traj.q))[:, 1:-1]


def action_hessian(L: LagrangianSpec, traj: Trajectory) -> np.ndarray:
    """Hessian of :func:`discrete_action` w.r.t. interior node values (coordinate-major)."""
    act = _Action(L, traj.grid)
    size = traj.grid.n + 1
    idx = np.concatenate([i * size + np.arange(1, size - 1) for i in range(L.n_coords)])
    return act.hessian(np.asarray(traj.q))[np.ix_(idx, idx)]


def _bfgs(act: _Action, bd: BoundaryData, q0: np.ndarray, cfg: SolverConfig):
    size = act.grid.n + 1
    h = act.grid.h
    idx = np.concatenate([i * size + np.arange(1, size - 1) for i in range(bd.n_coords)])

    def fg(x):
        q = _full(x, bd, size)
        return act.value(q), act.gradient(q)[:, 1:-1].ravel()

    def seed_inverse(x):
        hess = act.hessian(_full(x, bd, size))[np.ix_(idx, idx)]
        try:
            chol = np.linalg.cholesky(hess)
        except np.linalg.LinAlgError:
            return None
        inv_l = np.linalg.inv(chol)
        return inv_l.T @ inv_l

    x = q0[:, 1:-1].ravel().copy()
    f, g = fg(x)
    if not np.isfinite(f):
        raise LineSearchError("action is not finite at the initial guess")
    hinv = seed_inverse(x)
    seeded = hinv is not None
    if hinv is None:
        hinv = np.eye(len(x))
    history = [f]
    it = 0
    gnorm = np.max(np.abs(g)) / h if len(g) else 0.0
    while gnorm > cfg.gradient_tolerance and it < cfg.max_iterations:
        it += 1
        d = -hinv @ g
        slope = float(g @ d)
        if not slope < 0:
            hinv = seed_inverse(x)
            if hinv is None:
                hinv = np.eye(len(x))
            d = -hinv @ g
            slope = float(g @ d)
        lam = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS):
            xn = x + lam * d
            try:
                fn, gn = fg(xn)
            except ex.EvalDomainError:
                fn, gn = np.nan, None
            if np.isfinite(fn) and fn <= f + ARMIJO_C * lam * slope:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            # at round-off level the Armijo test is unreliable; accept any
            # non-increasing step that still shrinks the gradient
            if gn is not None and np.isfinite(fn) and fn <= f and np.max(np.abs(gn)) < np.max(np.abs(g)):
                accepted = True
            else:
                raise LineSearchError(
                    f"line search failed at iteration {it} (scaled gradient {gnorm:.3e})"
                )
        s, y = xn - x, gn - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if not seeded and it == 1:
                hinv = np.eye(len(x)) * (sy / float(y @ y))
            rho = 1.0 / sy
            hy = hinv @ y
            hinv = (
                hinv
                - rho * (np.outer(s, hy) + np.outer(hy, s))
                + (rho * rho * float(y @ hy) + rho) * np.outer(s, s)
            )
        x, f, g = xn, fn, gn
        history.append(f)
        gnorm = np.max(np.abs(g)) / h
    return _full(x, bd, size), it, gnorm, history


def _refine_el(act: _Action, bd: BoundaryData, q0: np.ndarray, cfg: SolverConfig):
    """Damped Newton on the collocated Euler-Lagrange equations from ``q0``.

    Returns ``(q, iterations, max|EL|)``; raises a :class:`NumericalError`
    subclass when the iteration breaks down or does not converge.
    """
    size = act.grid.n + 1
    x = q0[:, 1:-1].ravel().copy()
    r = act.el(_full(x, bd, size)).ravel()
    rnorm = float(np.max(np.abs(r))) if len(r) else 0.0
    it = 0
    while rnorm > cfg.residual_tolerance and it < cfg.max_iterations:
        it += 1
        try:
            step = np.linalg.solve(act.el_jacobian(_full(x, bd, size)), -r)
        except np.linalg.LinAlgError as err:
            raise DegenerateError(f"singular Euler-Lagrange Jacobian at iteration {it}") from err
        if not np.all(np.isfinite(step)):
            raise DegenerateError(f"non-finite Euler-Lagrange Newton step at iteration {it}")
        norm0 = np.linalg.norm(r)
        lam = 1.0
        for _ in range(MAX_HALVINGS):
            try:
                r_new = act.el(_full(x + lam * step, bd, size)).ravel()
            except ex.EvalDomainError:
                r_new = None
            if (
                r_new is not None
                and np.all(np.isfinite(r_new))
                and np.linalg.norm(r_new) <= (1 - ARMIJO_C * lam) * norm0
            ):
                break
            lam *= 0.5
        else:
            raise LineSearchError(f"Euler-Lagrange Newton backtracking failed (residual {rnorm:.3e})")
        x = x + lam * step
        r = r_new
        rnorm = float(np.max(np.abs(r)))
    if rnorm > cfg.residual_tolerance:
        raise ConvergenceError(f"Euler-Lagrange refinement stalled at residual {rnorm:.3e}")
    return _full(x, bd, size), it, rnorm


def solve_trajectory(
    L: LagrangianSpec,
    bd: BoundaryData,
    grid: UniformGrid,
    cfg: SolverConfig | None = None,
) -> SolveResult:
    """Minimise the discrete action with ``q(a) = qa``, ``q(b) = qb``.

    Quasi-Newton (BFGS) with Armijo backtracking; the inverse-Hessian
    approximation is seeded with the exact Hessian at the initial guess when
    that is positive definite.  Raises :class:`ConvergenceError` when the
    scaled gradient ``max|dS/dq| / h`` does not reach ``gradient_tolerance``.
    """
    cfg = cfg or SolverConfig()
    if bd.n_coords != L.n_coords:
        raise ValueError("boundary data and Lagrangian have different coordinate counts")
    act = _Action(L, grid)
    q0 = initial_guess(grid, bd, cfg)
    q, it, gnorm, history = _bfgs(act, bd, q0, cfg)
    if gnorm > cfg.gradient_tolerance:
        raise ConvergenceError(
            f"direct method did not converge in {cfg.max_iterations} iterations "
            f"(scaled gradient {gnorm:.3e})"
        )
    minimizer = q
    notes = []
    el_norm = None
    refine_iterations = 0
    if cfg.refine:
        try:
            q, refine_iterations, el_norm = _refine_el(act, bd, minimizer, cfg)
            notes.append(
                f"refined onto collocated Euler-Lagrange equations in {refine_iterations} "
                f"Newton steps (moved {float(np.max(np.abs(q - minimizer))):.3e})"
            )
        except NumericalError as err:
            logger.warning("Euler-Lagrange refinement failed, keeping the action minimizer: %s", err)
            notes.append(f"Euler-Lagrange refinement failed: {err}")
            q = minimizer
    traj = Trajectory(grid, q, L.orders)
    p = np.array([m.values for m in momenta(L, traj)])
    traj = traj.with_momenta(p)

    disagreement = None
    if cfg.restarts:
        rng = np.random.default_rng(cfg.seed)
        spread = max(1.0, float(np.max(np.abs(minimizer))))
        disagreement = 0.0
        for _ in range(cfg.restarts):
            qr = q0.copy()
            qr[:, 1:-1] += 0.1 * spread * rng.standard_normal(qr[:, 1:-1].shape)
            try:
                q_alt, _, g_alt, _ = _bfgs(act, bd, qr, cfg)
            except (LineSearchError, ex.EvalDomainError) as err:
                logger.warning("restart failed: %s", err)
                continue
            if g_alt <= cfg.gradient_tolerance:
                disagreement = max(disagreement, float(np.max(np.abs(q_alt - minimizer))))
    report = el_residual(L, traj)
    report.notes.extend(notes)
    return SolveResult(
        trajectory=traj,
        iterations=it,
        converged=True,
        final_norm=gnorm,
        action=act.value(q),
        report=report,
        action_history=history,
        restart_disagreement=disagreement,
        method="direct",
        refine_iterations=refine_iterations,
        el_norm=el_norm,
    )


# ---------------------------------------------------------------------------
# Canonical collocation


def solve_canonical(
    H: HamiltonianSpec,
    bd: BoundaryData,
    grid: UniformGrid,
    orders: Sequence[FracOrder],
    cfg: SolverConfig | None = None,
) -> SolveResult:
    """Damped Newton on the canonical equations.

    Unknowns are the interior coordinate values and the momenta at every node.
    ``dH/dp_i = CD q_i`` is imposed at every node (this is what fixes the
    endpoint momenta) and ``dH/dq_i = D p_i`` at interior nodes.
    """
    cfg = cfg or SolverConfig()
    orders = tuple(orders)
    if tuple(H.orders) != orders:
        raise ValueError("Hamiltonian orders do not match the requested orders")
    n, size = H.n_coords, grid.n + 1
    if bd.n_coords != n:
        raise ValueError("boundary data and Hamiltonian have different coordinate counts")
    inner = slice(1, size - 1)
    cmats = [combined_caputo_matrix(grid, o) for o in orders]
    dmats = [combined_rl_matrix(grid, o) for o in orders]
    qn, pn = H.names("q"), H.names("p")
    hq = [ex.diff(H.body, x) for x in qn]
    hp = [ex.diff(H.body, x) for x in pn]
    hpp = [[ex.diff(hp[i], pn[j]) for j in range(n)] for i in range(n)]
    hpq = [[ex.diff(hp[i], qn[j]) for j in range(n)] for i in range(n)]
    hqq = [[ex.diff(hq[i], qn[j]) for j in range(n)] for i in range(n)]
    hqp = [[ex.diff(hq[i], pn[j]) for j in range(n)] for i in range(n)]
    nq = n * (size - 2)

    def unpack(x):
        q = _full(x[:nq], bd, size)
        p = x[nq:].reshape(n, size)
        return q, p

    def bindings(q, p):
        b = {"t": grid.nodes}
        for i in range(n):
            b[qn[i]], b[pn[i]] = q[i], p[i]
        return b

    def ev(e, b):
        return np.broadcast_to(ex.evaluate(e, b), grid.nodes.shape)

    def residual(x):
        q, p = unpack(x)
        b = bindings(q, p)
        r1 = [ev(hp[i], b) - cmats[i] @ q[i] for i in range(n)]
        r2 = [(ev(hq[i], b) - dmats[i] @ p[i])[inner] for i in range(n)]
        return np.concatenate(r1 + r2)

    def jacobian(x):
        q, p = unpack(x)
        b = bindings(q, p)
        det = _batched_det(np.array([[ev(hpp[i][j], b) for j in range(n)] for i in range(n)]))
        if np.any(np.abs(det) < 1e-10):
            k = int(np.flatnonzero(np.abs(det) < 1e-10)[0])
            raise DegenerateError(f"d2H/dp2 is singular at node {k}")
        m = n * size + n * (size - 2)
        jac = np.zeros((m, len(x)))
        for i in range(n):
            r1_rows = slice(i * size, (i + 1) * size)
            r2_rows = slice(n * size + i * (size - 2), n * size + (i + 1) * (size - 2))
            for j in range(n):
                qcols = slice(j * (size - 2), (j + 1) * (size - 2))
                pcols = slice(nq + j * size, nq + (j + 1) * size)
                dq = np.diag(ev(hpq[i][j], b))[:, inner]
                if i == j:
                    dq = dq - cmats[i][:, inner]
                jac[r1_rows, qcols] = dq
                jac[r1_rows, pcols] = np.diag(ev(hpp[i][j], b))
                jac[r2_rows, qcols] = np.diag(ev(hqq[i][j], b))[inner, inner]
                dp = np.diag(ev(hqp[i][j], b))[inner, :]
                if i == j:
                    dp = dp - dmats[i][inner, :]
                jac[r2_rows, pcols] = dp
        return jac

    q0 = initial_guess(grid, bd, cfg)
    p0 = np.array([cmats[i] @ q0[i] for i in range(n)])
    x = np.concatenate([q0[:, 1:-1].ravel(), p0.ravel()])
    r = residual(x)
    rnorm = float(np.max(np.abs(r)))
    it = 0
    while rnorm > cfg.residual_tolerance and it < cfg.max_iterations:
        it += 1
        jac = jacobian(x)
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError as err:
            raise DegenerateError(f"singular Newton system at iteration {it}") from err
        if not np.all(np.isfinite(step)):
            raise DegenerateError(f"non-finite Newton step at iteration {it}")
        norm0 = np.linalg.norm(r)
        lam = 1.0
        for _ in range(MAX_HALVINGS):
            try:
                r_new = residual(x + lam * step)
            except ex.EvalDomainError:
                r_new = None
            if r_new is not None and np.all(np.isfinite(r_new)) and np.linalg.norm(r_new) <= (1 - ARMIJO_C * lam) * norm0:
                break
            lam *= 0.5
        else:
            raise LineSearchError(f"Newton backtracking failed at iteration {it} (residual {rnorm:.3e})")
        x = x + lam * step
        r = r_new
        rnorm = float(np.max(np.abs(r)))
    if rnorm > cfg.residual_tolerance:
        raise ConvergenceError(
            f"canonical solve did not converge in {cfg.max_iterations} iterations (residual {rnorm:.3e})"
        )
    q, p = unpack(x)
    traj = Trajectory(grid, q, orders, p)
    return SolveResult(
        trajectory=traj,
        iterations=it,
        converged=True,
        final_norm=rnorm,
        report=canonical_residual(H, traj, 10 * cfg.residual_tolerance),
        method="canonical",
    )


def _batched_det(m: np.ndarray) -> np.ndarray:
    """Determinants of per-node matrices given as ``m[i][j][node]``."""
    return np.linalg.det(np.moveaxis(m, -1, 0))
