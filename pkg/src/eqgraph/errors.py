"""Exception types raised by graph construction and evaluation."""


class GraphError(Exception):
    """Base class for all errors raised by eqgraph."""


class InvalidDimension(GraphError, ValueError):
    pass


class UnknownVariable(GraphError, KeyError):
    pass


class InvalidInformation(GraphError, ValueError):
    pass


class NonFiniteError(GraphError, ArithmeticError):
    """An error function produced NaN or inf."""


class NonFiniteJacobian(GraphError, ArithmeticError):
    """A Jacobian block contains NaN or inf."""


class InvalidWeight(GraphError, ValueError):
    pass


class InvalidHorizon(GraphError, ValueError):
    pass


class InvalidInput(GraphError, ValueError):
    pass


class SingularSystemError(GraphError, ArithmeticError):
    """The linear system could not be solved (rank-deficient constraints)."""
