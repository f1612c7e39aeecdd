"""Exception types shared across the package."""


class MRQMError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(MRQMError, ValueError):
    pass


class SingularChannelError(MRQMError, ZeroDivisionError):
    """A coupled channel with no damping was evaluated exactly on its resonance."""


class PoleError(MRQMError, ZeroDivisionError):
    """F(nu) = -1, so the reflection coefficient is undefined."""


class OptimizationFailedError(MRQMError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class StepSizeError(MRQMError, RuntimeError):
    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class WindowTooShortError(MRQMError, RuntimeError):
    def __init__(self, message, suggested_span=None):
        super().__init__(message)
        self.suggested_span = suggested_span
