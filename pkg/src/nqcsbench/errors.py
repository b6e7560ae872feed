"""Exception hierarchy shared across the workbench."""

from __future__ import annotations


class NqcsError(Exception):
    """Base class for all workbench errors."""


class DimensionError(NqcsError, ValueError):
    """A matrix or vector has an incompatible shape."""


class DomainError(NqcsError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class ConfigError(NqcsError, ValueError):
    """A configuration file or object violates a validation invariant."""


class IllConditionedDecompositionError(NqcsError):
    """The block-eigenvalue transform is too ill conditioned to trust.

    Carries the offending condition number so callers can decide on a
    fallback partitioning of the timing region.
    """

    def __init__(self, condition: float):
        self.condition = condition
        super().__init__(f"decomposition transform condition {condition:.3e} exceeds limit")


class TightnessNotAchievedError(NqcsError):
    """Partition refinement hit its cap before the tightness threshold."""

    def __init__(self, varpi: float, varpi_star: float, refinements: int):
        self.varpi = varpi
        self.varpi_star = varpi_star
        self.refinements = refinements
        super().__init__(
            f"tightness {varpi:.6g} > threshold {varpi_star:.6g} after {refinements} refinements"
        )


class ContainmentViolationError(NqcsError):
    """Sampled closed-loop matrices escaped the polytopic envelope."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__(f"{len(self.violations)} containment violations, first: {self.violations[0]}")


class CertificateInvalidError(NqcsError):
    """The solved Lyapunov data violates a certificate hypothesis."""


class HorizonTooShortError(NqcsError):
    """The simulation horizon leaves too much tail mass for a summed check."""
