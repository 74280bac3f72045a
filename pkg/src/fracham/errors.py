"""Exception hierarchy shared by the numerical modules."""


class NumericalError(RuntimeError):
    """A computation could not produce a trustworthy result."""


class DegenerateError(NumericalError):
    """A Jacobian or Hessian that must be invertible is (numerically) singular."""


class ConvergenceError(NumericalError):
    """An iteration did not reach its tolerance within the allowed budget."""


class LineSearchError(NumericalError):
    """Backtracking could not find an acceptable, finite step."""
