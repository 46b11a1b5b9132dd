"""Exception hierarchy shared by every module.

Each error also derives from the closest builtin so callers can catch either
the domain class or the generic one.
"""


class GaudinError(Exception):
    """Base class for all domain errors."""


class DegenerateLevelError(GaudinError, ValueError):
    """Two level coordinates coincide."""


class SingularExtensionError(GaudinError, ValueError):
    """A rapidity coincides with a level coordinate or another rapidity."""


class DomainError(GaudinError, ValueError):
    """A parameter lies outside its admissible range."""


class ContractionLimitError(GaudinError, ArithmeticError):
    """Quantity diverges at xi = 0 and has to be taken as a limit."""


class CollisionError(GaudinError, ArithmeticError):
    """Residual evaluation hit a vanishing denominator."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class NoConvergenceError(GaudinError, RuntimeError):
    """Newton iteration did not reach the tolerance."""

    def __init__(self, message, best=None, max_abs=None):
        super().__init__(message)
        self.best = best
        self.max_abs = max_abs


class SingularJacobianError(GaudinError, ArithmeticError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class InsufficientModesError(GaudinError, ValueError):
    """The secular equation has fewer roots than requested excitations."""


class SelectionError(GaudinError, ValueError):
    """Root occupation pattern is inconsistent with the selection rule."""


class RepresentationError(GaudinError, ValueError):
    """No finite unitary representation exists at the requested xi."""


class BasisMismatchError(GaudinError, ValueError):
    pass


class ContractError(GaudinError, ValueError):
    """Operator input violates a precondition (e.g. not hermitian)."""


class CutoffError(GaudinError, ValueError):
    pass


class FrameError(GaudinError, TypeError):
    """Rapidities given in the wrong coordinate frame."""


class SpecParseError(GaudinError, ValueError):
    def __init__(self, message, line=None, column=None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line
        self.column = column


class SpecValidationError(GaudinError, ValueError):
    pass


class VerificationError(GaudinError, AssertionError):
    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = failures or []
