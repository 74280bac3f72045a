"""Left/right Caputo and Riemann-Liouville derivatives of order in (0, 1).

Caputo derivatives use the L1 scheme on the uniform grid,

    D^mu f(t_k) ~ h^-mu / Gamma(2 - mu) * sum_{j<k} w_j (f[k-j] - f[k-j-1]),
    w_j = (j+1)^(1-mu) - j^(1-mu),

which is O(h^(2-mu)) for smooth f.  Right-sided operators are obtained by
reflecting the grid.  Riemann-Liouville derivatives are the Caputo ones plus
the exact boundary term ``f(a) (t-a)^-mu / Gamma(1-mu)`` (resp. at ``b``);
where that term is singular the node is flagged invalid.

Every operator also exists as a dense ``(n+1, n+1)`` matrix acting on node
values.  In the Riemann-Liouville matrices the singular row (0 for the left
operator, n for the right one) holds only the regular Caputo part; callers
must consult the validity mask of the function form or skip that row.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import GridFn, UniformGrid
from .special import gamma as gamma_fn

__all__ = [
    "FracOrder",
    "caputo_left",
    "caputo_right",
    "rl_left",
    "rl_right",
    "combined_caputo",
    "combined_rl",
    "caputo_left_matrix",
    "caputo_right_matrix",
    "rl_left_matrix",
    "rl_right_matrix",
    "combined_caputo_matrix",
    "combined_rl_matrix",
]


@dataclass(frozen=True)
class FracOrder:
    """Orders of one coordinate: left order ``alpha``, right order ``beta``,
    and the weight ``gamma`` of the left Caputo part."""

    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            x = getattr(self, name)
            if not 0.0 < x < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {x}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")


def _check_mu(mu: float):
    if not 0.0 < mu < 1.0:
        raise ValueError(f"order must lie in (0, 1), got {mu}")


def _check_valid(f: GridFn):
    if not f.all_valid:
        bad = np.flatnonzero(~f.valid).tolist()
        raise ValueError(f"fractional operators need a function valid everywhere; invalid: {bad}")


def _l1_weights(n: int, mu: float) -> np.ndarray:
    j = np.arange(n, dtype=float)
    return (j + 1.0) ** (1.0 - mu) - j ** (1.0 - mu)


def _l1_left(y: np.ndarray, h: float, mu: float) -> np.ndarray:
    n = len(y) - 1
    scale = h ** (-mu) / gamma_fn(2.0 - mu)
    out = np.zeros(n + 1)
    out[1:] = scale * np.convolve(_l1_weights(n, mu), np.diff(y))[:n]
    return out


def _boundary_kernel(grid: UniformGrid, mu: float) -> np.ndarray:
    """(t_k - a)^-mu / Gamma(1 - mu) for k >= 1; nan at k = 0."""
    k = np.arange(grid.n + 1, dtype=float)
    out = np.full(grid.n + 1, np.nan)
    out[1:] = (k[1:] * grid.h) ** (-mu) / gamma_fn(1.0 - mu)
    return out


# ---------------------------------------------------------------------------
# Function form


def caputo_left(f: GridFn, mu: float) -> GridFn:
    _check_mu(mu)
    _check_valid(f)
    return GridFn(f.grid, _l1_left(f.values, f.grid.h, mu))


def caputo_right(f: GridFn, mu: float) -> GridFn:
    _check_mu(mu)
    _check_valid(f)
    return GridFn(f.grid, _l1_left(f.values[::-1], f.grid.h, mu)[::-1])


def rl_left(f: GridFn, mu: float) -> GridFn:
    _check_mu(mu)
    _check_valid(f)
    vals = _l1_left(f.values, f.grid.h, mu)
    fa = f.values[0]
    valid = np.ones(len(vals), dtype=bool)
    if fa != 0.0:
        vals[1:] += fa * _boundary_kernel(f.grid, mu)[1:]
        valid[0] = False
    return GridFn(f.grid, vals, valid)


def rl_right(f: GridFn, mu: float) -> GridFn:
    _check_mu(mu)
    _check_valid(f)
    vals = _l1_left(f.values[::-1], f.grid.h, mu)
    fb = f.values[-1]
    valid = np.ones(len(vals), dtype=bool)
    if fb != 0.0:
        vals[1:] += fb * _boundary_kernel(f.grid, mu)[1:]
        valid[0] = False
    return GridFn(f.grid, vals[::-1], valid[::-1])


def combined_caputo(f: GridFn, o: FracOrder) -> GridFn:
    """gamma * left Caputo(alpha) + (1 - gamma) * right Caputo(beta)."""
    if o.gamma == 1.0:
        return caputo_left(f, o.alpha)
    if o.gamma == 0.0:
        return caputo_right(f, o.beta)
    left = caputo_left(f, o.alpha)
    right = caputo_right(f, o.beta)
    return GridFn(f.grid, o.gamma * left.values + (1.0 - o.gamma) * right.values)


def combined_rl(f: GridFn, o: FracOrder) -> GridFn:
    """(1 - gamma) * left RL(beta) + gamma * right RL(alpha).

    This is the operator acting on momenta in the Euler-Lagrange and
    canonical equations of coordinates with order ``o``.
    """
    if o.gamma == 1.0:
        return rl_right(f, o.alpha)
    if o.gamma == 0.0:
        return rl_left(f, o.beta)
    left = rl_left(f, o.beta)
    right = rl_right(f, o.alpha)
    valid = left.valid & right.valid
    vals = (1.0 - o.gamma) * left.values + o.gamma * right.values
    return GridFn(f.grid, np.where(valid, vals, np.nan), valid)


# ---------------------------------------------------------------------------
# Matrix form (cached, read-only)


def _readonly(m: np.ndarray) -> np.ndarray:
    m.setflags(write=False)
    return m


@lru_cache(maxsize=64)
def caputo_left_matrix(grid: UniformGrid, mu: float) -> np.ndarray:
    _check_mu(mu)
    n = grid.n
    scale = grid.h ** (-mu) / gamma_fn(2.0 - mu)
    w = _l1_weights(n, mu)
    # coefficient of f[m] in row k depends on j = k - m only, except column 0
    diag_coef = np.empty(n + 1)
    diag_coef[0] = w[0]
    diag_coef[1:n] = w[1:] - w[:-1]
    diag_coef[n] = 0.0
    k = np.arange(n + 1)
    lag = k[:, None] - k[None, :]
    m = np.where(lag >= 0, diag_coef[np.clip(lag, 0, n)], 0.0)
    m[:, 0] = 0.0
    m[1:, 0] = -w[: n]
    m[0, :] = 0.0
    return _readonly(scale * m)


@lru_cache(maxsize=64)
def caputo_right_matrix(grid: UniformGrid, mu: float) -> np.ndarray:
    return _readonly(np.array(caputo_left_matrix(grid, mu)[::-1, ::-1]))


@lru_cache(maxsize=64)
def rl_left_matrix(grid: UniformGrid, mu: float) -> np.ndarray:
    m = np.array(caputo_left_matrix(grid, mu))
    m[1:, 0] += _boundary_kernel(grid, mu)[1:]
    return _readonly(m)


@lru_cache(maxsize=64)
def rl_right_matrix(grid: UniformGrid, mu: float) -> np.ndarray:
    return _readonly(np.array(rl_left_matrix(grid, mu)[::-1, ::-1]))


@lru_cache(maxsize=64)
def combined_caputo_matrix(grid: UniformGrid, o: FracOrder) -> np.ndarray:
    if o.gamma == 1.0:
        return caputo_left_matrix(grid, o.alpha)
    if o.gamma == 0.0:
        return caputo_right_matrix(grid, o.beta)
    return _readonly(
        o.gamma * caputo_left_matrix(grid, o.alpha)
        + (1.0 - o.gamma) * caputo_right_matrix(grid, o.beta)
    )


@lru_cache(maxsize=64)
def combined_rl_matrix(grid: UniformGrid, o: FracOrder) -> np.ndarray:
    if o.gamma == 1.0:
        return rl_right_matrix(grid, o.alpha)
    if o.gamma == 0.0:
        return rl_left_matrix(grid, o.beta)
    return _readonly(
        (1.0 - o.gamma) * rl_left_matrix(grid, o.beta)
        + o.gamma * rl_right_matrix(grid, o.alpha)
    )
