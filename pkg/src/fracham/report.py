"""Residual reports and tolerance policy."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .fracops import FracOrder
from .grid import GridFn, UniformGrid

__all__ = [
    "ResidualReport",
    "included_mask",
    "discretization_tolerance",
    "ALGEBRAIC_TOL",
    "EDGE_EXCLUSION",
]

ALGEBRAIC_TOL = 1e-10
EDGE_EXCLUSION = 2


def discretization_tolerance(
    grid: UniformGrid, orders: Sequence[FracOrder], c: float = 10.0
) -> float:
    """``c * h**min(2 - alpha*, 2 - beta*)`` with the largest orders in play."""
    a_max = max(o.alpha for o in orders)
    b_max = max(o.beta for o in orders)
    return c * grid.h ** min(2.0 - a_max, 2.0 - b_max)


def included_mask(fns: Iterable[GridFn], edge: int = EDGE_EXCLUSION) -> np.ndarray:
    """Nodes valid in every function, minus ``edge`` nodes at each end."""
    fns = list(fns)
    mask = np.ones(fns[0].grid.n + 1, dtype=bool)
    for f in fns:
        mask &= f.valid
    mask[:edge] = False
    mask[len(mask) - edge :] = False
    return mask


@dataclass
class EquationSummary:
    name: str
    sup_norm: float
    rms: float
    included_nodes: int
    passed: bool


@dataclass
class ResidualReport:
    """Residual grid functions of one check with their norms and verdict."""

    residuals: dict[str, GridFn]
    tolerance: float
    summaries: list[EquationSummary]
    advisory: bool = False
    notes: list[str] = field(default_factory=list)

    @classmethod
    def build(
        cls,
        residuals: Mapping[str, GridFn],
        tolerance: float,
        *,
        advisory: bool = False,
        notes: Sequence[str] = (),
    ) -> "ResidualReport":
        summaries = []
        for name, r in residuals.items():
            mask = included_mask([r])
            vals = r.values[mask]
            if vals.size:
                sup = float(np.max(np.abs(vals)))
                rms = float(np.sqrt(np.mean(vals * vals)))
            else:
                sup = rms = float("nan")
            summaries.append(
                EquationSummary(name, sup, rms, int(mask.sum()), bool(vals.size and sup <= tolerance))
            )
        return cls(dict(residuals), float(tolerance), summaries, advisory, list(notes))

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.summaries)

    @property
    def sup_norm(self) -> float:
        return max(s.sup_norm for s in self.summaries)

    @property
    def rms(self) -> float:
        return max(s.rms for s in self.summaries)

    def __getitem__(self, name: str) -> GridFn:
        return self.residuals[name]

    def summary_csv(self) -> str:
        lines = ["equation,sup_norm,rms,included_nodes,pass"]
        for s in self.summaries:
            lines.append(f"{s.name},{s.sup_norm:.17g},{s.rms:.17g},{s.included_nodes},{int(s.passed)}")
        return "\n".join(lines) + "\n"

    def describe(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        if self.advisory:
            status += " (advisory)"
        parts = [f"{status} tol={self.tolerance:.3g}"]
        for s in self.summaries:
            parts.append(f"  {s.name}: sup={s.sup_norm:.3e} rms={s.rms:.3e} nodes={s.included_nodes}")
        parts.extend(f"  note: {n}" for n in self.notes)
        return "\n".join(parts)
