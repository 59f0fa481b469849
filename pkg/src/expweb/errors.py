"""Exception types shared across the package."""


class ExpWebError(Exception):
    """Base class for all package errors."""


class ExpSumOverflow(ExpWebError, OverflowError):
    """A term exponent exceeds the float range; use the log-space routines."""


class ZeroValue(ExpWebError, ArithmeticError):
    """f vanishes at a point where a quotient by f is required."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class NotExpanding(ExpWebError, ValueError):
    """The radius does not satisfy M(r, f) > r (or mu(r) > r)."""


class MuNotExpanding(NotExpanding):
    pass


class OrderTooSmall(ExpWebError, ValueError):
    """The construction needs n >= 3; E_1 and E_2 lie in class B."""


class NuTooSmall(ExpWebError, ValueError):
    pass


class NotFound(ExpWebError, RuntimeError):
    pass


class DerivativeZero(ExpWebError, ArithmeticError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class PreconditionViolated(ExpWebError, ValueError):
    pass


class ParamSearchFailed(ExpWebError, ValueError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class BoxNotInSector(ExpWebError, ValueError):
    pass


class WindingUnstable(ExpWebError, RuntimeError):
    pass


class ConfigError(ExpWebError, ValueError):
    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
