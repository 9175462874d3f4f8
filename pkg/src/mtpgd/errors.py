"""Exception hierarchy shared by all modules."""


class MTPGDError(Exception):
    """Base class for all errors raised by the package."""


class GeometryError(MTPGDError):
    """Invalid mesh geometry, e.g. a non-positive element Jacobian."""


class RigidBodyError(MTPGDError):
    """The problem is not constrained against rigid-body motion."""


class ShapeError(MTPGDError, ValueError):
    """Array dimensions do not match the mesh or time grid."""


class NumericError(MTPGDError, ArithmeticError):
    """Non-finite input or a failed linear solve."""


class ArgumentError(MTPGDError, ValueError):
    """An argument is outside its admissible range."""


class ConvergenceError(MTPGDError):
    """An iterative procedure did not reach its tolerance.

    Parameters
    ----------
    message : str
        Description of the failure.
    best : object, optional
        Best iterate available when the procedure stopped.
    history : sequence of float, optional
        Residual history recorded by the procedure.
    """

    def __init__(self, message, best=None, history=()):
        super().__init__(message)
        self.best = best
        self.history = list(history)
