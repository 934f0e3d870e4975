"""Exception types separating user/validation faults from numerical failures.

The CLI maps ``ValueError`` (and subclasses) to exit code 2 and
:class:`NumericalError` to exit code 3.
"""


class NumericalError(RuntimeError):
    """Numerical failure: lost stability, rank deficiency, no convergence."""


class DivergenceError(NumericalError):
    """A simulated state trajectory left the admissible region."""
