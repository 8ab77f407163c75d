"""Exception hierarchy shared by every qtransmit service."""

from typing import List, Optional


class QTransmitError(Exception):
    """Base class for all simulator errors."""


class ArgumentError(QTransmitError, ValueError):
    """An operation was called with out-of-range or mismatched arguments."""


class ConfigError(QTransmitError):
    """An experiment or protocol configuration is malformed or inadmissible."""

    def __init__(self, message: str, diagnostics: Optional[List[str]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        return base + "\n" + "\n".join(f"  - {d}" for d in self.diagnostics)


class GeometryError(QTransmitError):
    """A path leaves the region a channel is declared secure over."""


class CausalityError(QTransmitError):
    """A message would be delivered outside the sender's light cone."""


class StateError(QTransmitError):
    """A quantum resource is missing or was already consumed."""


class SchedulingError(QTransmitError):
    """A required transport cannot reach its destination in time."""


class UnsupportedStrategyError(QTransmitError):
    """A strategy was asked to act in a setting it does not cover."""


class SamplingBudgetError(QTransmitError):
    """Postselection acceptance dropped below the configured floor."""


class AuditError(QTransmitError):
    """A transcript failed its causality, linearity or taint audit."""

    def __init__(self, message: str, violations: Optional[List[str]] = None):
        super().__init__(message)
        self.violations = violations or []
