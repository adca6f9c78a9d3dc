"""Exception hierarchy.

Every error carries the name of the module that raised it so the CLI can
report module-qualified messages.
"""

from __future__ import annotations


class RetvolError(Exception):
    module = "retvol"

    def __init__(self, message: str, *, module: str | None = None):
        super().__init__(message)
        if module is not None:
            self.module = module

    def __str__(self) -> str:
        return f"{self.module}: {super().__str__()}"


class ParseError(RetvolError):
    def __init__(self, message: str, line: int | None = None, **kw):
        super().__init__(message, **kw)
        self.line = line


class ValidationError(RetvolError):
    pass


class EmptySeriesError(RetvolError):
    pass


class InsufficientDataError(RetvolError):
    pass


class ZeroVarianceError(RetvolError):
    pass


class DegenerateVolumeError(RetvolError):
    pass


class DegenerateSampleError(RetvolError):
    pass


class InsufficientTailError(RetvolError):
    pass


class InsufficientRangeError(RetvolError):
    pass


class ParameterError(RetvolError, ValueError):
    pass


class DomainError(RetvolError, ValueError):
    pass


class ComparabilityError(RetvolError):
    pass


class NumericsError(RetvolError):
    def __init__(self, message: str, diagnostics: dict | None = None, **kw):
        super().__init__(message, **kw)
        self.diagnostics = diagnostics or {}


class FitFailureError(RetvolError):
    """Raised when a fit does not converge; ``best`` holds the best-so-far result."""

    def __init__(self, message: str, best=None, **kw):
        super().__init__(message, **kw)
        self.best = best


class GenerationError(RetvolError):
    def __init__(self, message: str, index: int | None = None, **kw):
        super().__init__(message, **kw)
        self.index = index
