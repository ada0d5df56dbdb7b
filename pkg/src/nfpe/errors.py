"""Exception types raised by the solvers."""


class NFPEError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(NFPEError, ValueError):
    pass


class QuadratureError(NFPEError):
    pass


class RangeError(NFPEError):
    """A monotone inversion could not bracket its target."""


class BracketError(NFPEError):
    pass


class NonConvergenceError(NFPEError):
    def __init__(self, message, step=None, report=None):
        super().__init__(message)
        self.step = step
        self.report = report


class ConfigError(NFPEError, ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
