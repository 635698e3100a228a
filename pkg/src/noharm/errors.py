"""Exception types shared across the solver stack."""

from __future__ import annotations


class StrictnessError(ValueError):
    """A non-strict game was solved without weak mode."""


class ResourceExhaustedError(RuntimeError):
    """A configured size or node budget was exceeded."""


class InternalInvariantError(RuntimeError):
    """A guard that should be unreachable fired; indicates a bug."""


class StrategyCoverageError(RuntimeError):
    """A strategy failed to prescribe an action at a reachable context."""
