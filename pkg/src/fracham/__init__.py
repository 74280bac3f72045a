"""Combined-Caputo fractional variational mechanics, made computable.

Discretized combined fractional operators, a small symbolic expression
language for Lagrangians and Hamiltonians, residual checks for the
Euler-Lagrange, canonical, constant-of-motion, canonical-transformation and
Hamilton-Jacobi identities, and two trajectory solvers.
"""

from .dynamics import (
    canonical_residual,
    cyclic_momentum_check,
    dH_dt_diagnostic,
    el_residual,
    hamiltonian_symbolic,
    is_constant_of_motion,
    legendre_pointwise,
    momenta,
    partial_t_check,
)
from .errors import ConvergenceError, DegenerateError, LineSearchError, NumericalError
from .expr import diff, evaluate, parse, simplify, substitute, to_string
from .fracops import (
    FracOrder,
    caputo_left,
    caputo_right,
    combined_caputo,
    combined_rl,
    rl_left,
    rl_right,
)
from .grid import GridFn, UniformGrid, classical_derivative, cumulative_integral, make_grid, sample
from .model import GeneratingFunction, HamiltonianSpec, LagrangianSpec, Trajectory
from .report import ResidualReport
from .solver import (
    BoundaryData,
    SolverConfig,
    SolveResult,
    action_gradient,
    discrete_action,
    solve_canonical,
    solve_trajectory,
)
from .transforms import (
    TransformPair,
    gauge_residual,
    hj_residual,
    second_kind_from_first,
    verify_trans1,
    verify_trans2,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BoundaryData",
    "ConvergenceError",
    "DegenerateError",
    "FracOrder",
    "GeneratingFunction",
    "GridFn",
    "HamiltonianSpec",
    "LagrangianSpec",
    "LineSearchError",
    "NumericalError",
    "ResidualReport",
    "SolveResult",
    "SolverConfig",
    "Trajectory",
    "TransformPair",
    "UniformGrid",
    "action_gradient",
    "canonical_residual",
    "caputo_left",
    "caputo_right",
    "classical_derivative",
    "combined_caputo",
    "combined_rl",
    "cumulative_integral",
    "cyclic_momentum_check",
    "dH_dt_diagnostic",
    "diff",
    "discrete_action",
    "el_residual",
    "evaluate",
    "gauge_residual",
    "hamiltonian_symbolic",
    "hj_residual",
    "is_constant_of_motion",
    "legendre_pointwise",
    "make_grid",
    "momenta",
    "parse",
    "partial_t_check",
    "rl_left",
    "rl_right",
    "sample",
    "second_kind_from_first",
    "simplify",
    "solve_canonical",
    "solve_trajectory",
    "substitute",
    "to_string",
    "verify_trans1",
    "verify_trans2",
]
