"""Uniform time grids and sampled functions on them."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import expr as ex

__all__ = [
    "UniformGrid",
    "GridFn",
    "make_grid",
    "sample",
    "classical_derivative",
    "cumulative_integral",
    "gridfn_to_csv",
    "gridfn_from_csv",
    "trapezoid_weights",
    "MIN_INTERVALS",
]

logger = logging.getLogger(__name__)

MIN_INTERVALS = 4


@dataclass(frozen=True)
class UniformGrid:
    """Grid ``t_k = a + k*h`` for ``k = 0..n`` with ``t_n == b`` exactly."""

    a: float
    b: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError("grid endpoints must be finite")
        if not self.a < self.b:
            raise ValueError(f"empty interval: a={self.a} must be < b={self.b}")
        if int(self.n) != self.n or self.n < MIN_INTERVALS:
            raise ValueError(f"n must be an integer >= {MIN_INTERVALS}, got {self.n}")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        t = self.a + np.arange(self.n + 1) * self.h
        t[-1] = self.b
        t.setflags(write=False)
        return t

    def __len__(self) -> int:
        return self.n + 1

    def reflect(self, values: np.ndarray) -> np.ndarray:
        """Values of ``f(a + b - t)`` at the nodes, given ``f`` at the nodes."""
        return np.asarray(values)[..., ::-1]


def make_grid(a: float, b: float, n: int) -> UniformGrid:
    return UniformGrid(a, b, n)


@dataclass(frozen=True, eq=False)
class GridFn:
    """Real function sampled on a grid, with a per-node validity mask.

    Invalid nodes carry ``nan``; the mask is authoritative.
    """

    grid: UniformGrid
    values: np.ndarray
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n + 1,):
            raise ValueError(
                f"expected {self.grid.n + 1} values, got shape {values.shape}"
            )
        if self.valid is None:
            valid = np.ones(values.shape, dtype=bool)
        else:
            valid = np.array(self.valid, dtype=bool)
            if valid.shape != values.shape:
                raise ValueError("validity mask shape does not match values")
        if not np.all(np.isfinite(values[valid])):
            raise ValueError("valid entries must be finite")
        values[~valid] = np.nan
        values.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def all_valid(self) -> bool:
        return bool(self.valid.all())

    def __call__(self, k: int) -> float:
        return float(self.values[k])

    def __eq__(self, other):
        if not isinstance(other, GridFn):
            return NotImplemented
        return (
            self.grid == other.grid
            and np.array_equal(self.valid, other.valid)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    def __hash__(self):
        return hash((self.grid, self.values.tobytes(), self.valid.tobytes()))

    def _binary(self, other, op):
        if isinstance(other, GridFn):
            if other.grid != self.grid:
                raise ValueError("grid mismatch")
            return GridFn(self.grid, op(self.values, other.values), self.valid & other.valid)
        return GridFn(self.grid, op(self.values, float(other)), self.valid)

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFn(self.grid, -self.values, self.valid)


def sample(f: ex.Expr, grid: UniformGrid) -> GridFn:
    """Evaluate an expression of ``t`` alone at every grid node."""
    extra = ex.free_vars(f) - {"t"}
    if extra:
        raise ValueError(f"expression may only reference t, found {sorted(extra)}")
    values = ex.evaluate(f, {"t": grid.nodes})
    return GridFn(grid, np.broadcast_to(values, grid.nodes.shape))


def _require_valid(f: GridFn, what: str):
    if not f.all_valid:
        bad = np.flatnonzero(~f.valid).tolist()
        raise ValueError(f"{what} requires a function valid on every node; invalid: {bad}")


def classical_derivative(f: GridFn) -> GridFn:
    """Second-order finite differences: central inside, one-sided at the ends."""
    _require_valid(f, "classical_derivative")
    y, h = f.values, f.grid.h
    d = np.empty_like(y)
    d[1:-1] = (y[2:] - y[:-2]) / (2 * h)
    d[0] = (-3 * y[0] + 4 * y[1] - y[2]) / (2 * h)
    d[-1] = (3 * y[-1] - 4 * y[-2] + y[-3]) / (2 * h)
    return GridFn(f.grid, d)


def _patch_endpoints(f: GridFn) -> np.ndarray:
    y = np.array(f.values)
    valid = f.valid
    if valid.all():
        return y
    n = len(y) - 1
    bad = np.flatnonzero(~valid)
    if any(0 < k < n for k in bad):
        raise ValueError(f"interior invalid nodes {bad.tolist()} cannot be patched")
    if not (valid[1] and valid[2] and valid[n - 1] and valid[n - 2]):
        raise ValueError("more than one contiguous invalid node at an endpoint")
    if not valid[0]:
        y[0] = 2 * y[1] - y[2]
        logger.info("cumulative_integral: patched invalid node 0 by linear extrapolation")
    if not valid[n]:
        y[n] = 2 * y[n - 1] - y[n - 2]
        logger.info("cumulative_integral: patched invalid node %d by linear extrapolation", n)
    return y


def cumulative_integral(f: GridFn) -> GridFn:
    """Running trapezoid integral from ``a``; result[0] == 0.

    A single invalid node at either end is replaced by linear extrapolation
    from its two nearest neighbours before integrating.
    """
    y = _patch_endpoints(f)
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * f.grid.h * (y[1:] + y[:-1]))
    return GridFn(f.grid, out)


def trapezoid_weights(grid: UniformGrid) -> np.ndarray:
    w = np.full(grid.n + 1, grid.h)
    w[0] = w[-1] = 0.5 * grid.h
    return w


def gridfn_to_csv(f: GridFn) -> str:
    buf = io.StringIO()
    buf.write("t,value,valid\n")
    for t, v, ok in zip(f.grid.nodes, f.values, f.valid):
        buf.write(f"{t:.17g},{v:.17g},{int(ok)}\n")
    return buf.getvalue()


def gridfn_from_csv(text: str, grid: UniformGrid | None = None) -> GridFn:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["t", "value", "valid"]:
        raise ValueError("GridFn CSV must start with header 't,value,valid'")
    body = [r for r in rows[1:] if r]
    t = np.array([float(r[0]) for r in body])
    values = np.array([float(r[1]) for r in body])
    valid = np.array([bool(int(r[2])) for r in body])
    if grid is None:
        grid = UniformGrid(t[0], t[-1], len(t) - 1)
    if len(t) != grid.n + 1 or not np.allclose(t, grid.nodes, rtol=0, atol=1e-12 * (grid.b - grid.a)):
        raise ValueError("CSV nodes do not match the grid")
    return GridFn(grid, np.where(valid, values, np.nan), valid)
