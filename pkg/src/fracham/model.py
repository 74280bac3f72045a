"""Problem descriptions: Lagrangians, Hamiltonians, generating functions, trajectories."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import expr as ex
from .fracops import FracOrder
from .grid import GridFn, UniformGrid

__all__ = [
    "LagrangianSpec",
    "HamiltonianSpec",
    "GeneratingFunction",
    "Trajectory",
    "check_variables",
]


def check_variables(body: ex.Expr, n_coords: int, kinds: Sequence[str], what: str):
    """Reject variables outside ``{t} | {kind<k> : kind in kinds, k <= N}``."""
    for name in ex.free_vars(body):
        kind, index = ex.var_kind(name)
        if kind == "t":
            continue
        if kind not in kinds:
            raise ValueError(f"{what} may not reference {name!r}")
        if not 1 <= index <= n_coords:
            raise ex.IndexOutOfRange(f"{name!r} out of range 1..{n_coords}")


def _orders(orders, n_coords) -> tuple[FracOrder, ...]:
    orders = tuple(orders)
    if len(orders) != n_coords:
        raise ValueError(f"expected {n_coords} orders, got {len(orders)}")
    return orders


@dataclass(frozen=True)
class LagrangianSpec:
    """``L(t, q, v)`` where ``v_i`` is the combined Caputo derivative of ``q_i``."""

    n_coords: int
    orders: tuple[FracOrder, ...]
    body: ex.Expr

    def __post_init__(self):
        object.__setattr__(self, "orders", _orders(self.orders, self.n_coords))
        check_variables(self.body, self.n_coords, ("q", "v"), "a Lagrangian")

    @classmethod
    def from_text(cls, text: str, orders: Sequence[FracOrder]) -> "LagrangianSpec":
        return cls(len(orders), tuple(orders), ex.parse(text, len(orders)))

    def names(self, kind: str) -> list[str]:
        return [f"{kind}{i}" for i in range(1, self.n_coords + 1)]


@dataclass(frozen=True)
class HamiltonianSpec:
    """``H(t, q, p)``."""

    n_coords: int
    orders: tuple[FracOrder, ...]
    body: ex.Expr

    def __post_init__(self):
        object.__setattr__(self, "orders", _orders(self.orders, self.n_coords))
        check_variables(self.body, self.n_coords, ("q", "p"), "a Hamiltonian")

    @classmethod
    def from_text(cls, text: str, orders: Sequence[FracOrder]) -> "HamiltonianSpec":
        return cls(len(orders), tuple(orders), ex.parse(text, len(orders)))

    def names(self, kind: str) -> list[str]:
        return [f"{kind}{i}" for i in range(1, self.n_coords + 1)]


@dataclass(frozen=True)
class GeneratingFunction:
    """F1(t, qbar, Qbar) for ``kind == 1`` or F2(t, qbar, P) for ``kind == 2``."""

    kind: int
    n_coords: int
    body: ex.Expr
    # kind 2 only: Qbar may appear and is bound along the pair (F1 + P.Qbar form)
    implicit_qbar: bool = False

    def __post_init__(self):
        if self.kind not in (1, 2):
            raise ValueError(f"generating function kind must be 1 or 2, got {self.kind}")
        if self.implicit_qbar and self.kind != 2:
            raise ValueError("implicit_qbar only applies to second-kind functions")
        allowed = ("qbar", "Qbar") if self.kind == 1 else ("qbar", "P")
        if self.implicit_qbar:
            allowed = ("qbar", "Qbar", "P")
        check_variables(self.body, self.n_coords, allowed, f"a kind-{self.kind} generating function")

    @classmethod
    def from_text(cls, text: str, kind: int, n_coords: int) -> "GeneratingFunction":
        return cls(kind, n_coords, ex.parse(text, n_coords))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Coordinates (and optionally momenta) sampled on a shared grid.

    ``q`` and ``p`` are arrays of shape ``(N, n + 1)``.
    """

    grid: UniformGrid
    q: np.ndarray
    orders: tuple[FracOrder, ...]
    p: np.ndarray | None = None

    def __post_init__(self):
        q = np.array(self.q, dtype=float, ndmin=2)
        if q.shape[1] != self.grid.n + 1:
            raise ValueError(f"q has {q.shape[1]} nodes, grid has {self.grid.n + 1}")
        orders = _orders(self.orders, q.shape[0])
        if not np.all(np.isfinite(q)):
            raise ValueError("trajectory coordinates must be finite")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "orders", orders)
        if self.p is not None:
            p = np.array(self.p, dtype=float, ndmin=2)
            if p.shape != q.shape:
                raise ValueError(f"p shape {p.shape} does not match q shape {q.shape}")
            if not np.all(np.isfinite(p)):
                raise ValueError("trajectory momenta must be finite")
            p.setflags(write=False)
            object.__setattr__(self, "p", p)

    @property
    def n_coords(self) -> int:
        return self.q.shape[0]

    def q_fn(self, i: int) -> GridFn:
        return GridFn(self.grid, self.q[i])

    def p_fn(self, i: int) -> GridFn:
        if self.p is None:
            raise ValueError("trajectory has no momenta")
        return GridFn(self.grid, self.p[i])

    def with_momenta(self, p) -> "Trajectory":
        return Trajectory(self.grid, self.q, self.orders, p)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        same_p = (self.p is None and other.p is None) or (
            self.p is not None and other.p is not None and np.array_equal(self.p, other.p)
        )
        return (
            self.grid == other.grid
            and self.orders == other.orders
            and np.array_equal(self.q, other.q)
            and same_p
        )

    __hash__ = None
