"""Exception hierarchy shared by all fcmplan modules."""

from __future__ import annotations


class FcmplanError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(FcmplanError):
    """One or more invariant violations, each as a (field_path, message) pair."""

    def __init__(self, violations: list[tuple[str, str]]):
        self.violations = list(violations)
        lines = "\n".join(f"  {path}: {msg}" for path, msg in self.violations)
        super().__init__(f"{len(self.violations)} validation error(s):\n{lines}")


class DisconnectedError(FcmplanError):
    pass


class ConfigError(FcmplanError):
    pass


class ParseError(FcmplanError):
    """Malformed input file; message carries line/column context."""


class NumericsError(FcmplanError):
    pass


class CapExceededError(FcmplanError):
    pass


class DomainError(FcmplanError):
    pass


class ShapeError(FcmplanError):
    pass


class ModelingError(FcmplanError):
    """A model self-check failed: an always-feasible model came back infeasible,
    or recomputed costs disagree with the solver."""
