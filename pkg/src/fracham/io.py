"""CSV serialization of trajectories and reports, with atomic file writes."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from .fracops import FracOrder
from .grid import UniformGrid
from .model import Trajectory
from .report import ResidualReport

__all__ = [
    "atomic_write",
    "trajectory_to_csv",
    "trajectory_from_csv",
    "report_to_csv",
]


def atomic_write(path: str | os.PathLike, text: str) -> Path:
    """Write ``text`` to ``path`` through a sibling temp file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def trajectory_to_csv(traj: Trajectory) -> str:
    """Header ``t,q1..qN[,p1..pN]`` and one row per node, 17 significant digits."""
    n = traj.n_coords
    header = ["t"] + [f"q{i}" for i in range(1, n + 1)]
    cols = [traj.grid.nodes] + list(traj.q)
    if traj.p is not None:
        header += [f"p{i}" for i in range(1, n + 1)]
        cols += list(traj.p)
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in zip(*cols):
        buf.write(",".join(f"{x:.17g}" for x in row) + "\n")
    return buf.getvalue()


def trajectory_from_csv(
    text: str, orders: Sequence[FracOrder], grid: UniformGrid | None = None
) -> Trajectory:
    """Parse the trajectory CSV format; momenta columns are optional.

    With ``grid`` given, the node column must match it; otherwise the grid is
    rebuilt from the first and last node and the node count.
    """
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows:
        raise ValueError("empty trajectory CSV")
    header = [c.strip() for c in rows[0]]
    n = len(orders)
    expected_q = ["t"] + [f"q{i}" for i in range(1, n + 1)]
    expected_qp = expected_q + [f"p{i}" for i in range(1, n + 1)]
    if header not in (expected_q, expected_qp):
        raise ValueError(
            f"trajectory CSV header must be {','.join(expected_qp)} (momenta optional), "
            f"got {','.join(header)}"
        )
    try:
        data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
    except ValueError as err:
        raise ValueError(f"malformed number in trajectory CSV: {err}") from None
    if data.ndim != 2 or data.shape[1] != len(header) or data.shape[0] < 5:
        raise ValueError("trajectory CSV needs at least 5 rows with one value per column")
    t = data[:, 0]
    if not np.all(np.diff(t) > 0):
        raise ValueError("trajectory CSV times must be strictly increasing")
    if grid is None:
        grid = UniformGrid(float(t[0]), float(t[-1]), len(t) - 1)
    if len(t) != grid.n + 1 or not np.allclose(
        t, grid.nodes, rtol=0, atol=1e-12 * (grid.b - grid.a)
    ):
        raise ValueError("trajectory CSV nodes do not match the grid")
    q = data[:, 1 : n + 1].T
    p = data[:, n + 1 :].T if len(header) == len(expected_qp) else None
    return Trajectory(grid, q, tuple(orders), p)


def report_to_csv(report: ResidualReport) -> str:
    """Per-node residuals (``t`` plus one column per equation, blank where excluded)
    followed by a blank line and the summary block."""
    names = list(report.residuals)
    first = report.residuals[names[0]]
    buf = io.StringIO()
    buf.write(",".join(["t"] + names) + "\n")
    for k, t in enumerate(first.grid.nodes):
        cells = [f"{t:.17g}"]
        for name in names:
            r = report.residuals[name]
            cells.append(f"{r.values[k]:.17g}" if r.valid[k] else "")
        buf.write(",".join(cells) + "\n")
    buf.write("\n")
    buf.write(report.summary_csv())
    return buf.getvalue()
