"""Exception types raised by the pcn package."""


class PcnError(Exception):
    """Base class for all package-specific errors."""


class DivergenceError(PcnError, RuntimeError):
    """Raised when activities become NaN/Inf during inference.

    Carries the step index at which the divergence was detected.
    """

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"inference diverged (NaN/Inf) at step {step}")


class NonConvergenceError(PcnError, RuntimeError):
    """Raised when an iterative solver exhausts its iteration cap."""


class DefinitenessError(PcnError, ValueError):
    """Raised when a matrix required to be positive-definite is not."""


class NonInvertibleActivationError(PcnError, ValueError):
    """Raised when an inverse is requested for a non-invertible activation."""


class DomainError(PcnError, ValueError):
    """Raised when a value lies outside the domain of an inverse function."""


class IdxFormatError(PcnError, ValueError):
    """Raised for malformed IDX dataset files (bad magic, truncation, mismatch)."""
