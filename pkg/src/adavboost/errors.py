"""Exception types raised across the package."""

from .kernels import InvalidInputError, ShapeError


class ConfigError(ValueError):
    """A configuration violates its invariants."""


class CapacityError(ValueError):
    """An image carries more concepts than there are visual slots."""


class PreconditionError(ValueError):
    """An operation was called outside its documented domain."""


class InterventionError(RuntimeError):
    """An attention callback produced non-finite scores."""


class ReportError(ValueError):
    """An episode is missing a mode required by a report."""


__all__ = [
    "CapacityError",
    "ConfigError",
    "InterventionError",
    "InvalidInputError",
    "PreconditionError",
    "ReportError",
    "ShapeError",
]
