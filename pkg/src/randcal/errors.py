"""Exception hierarchy.

Public functions raise these instead of bare ValueError/RuntimeError so the
CLI can map failures to stable exit codes (config/usage -> 2, runtime -> 1).
"""


class RandcalError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(RandcalError, ValueError):
    """An argument is outside the mathematical domain of the operation."""


class ShapeError(RandcalError, ValueError):
    """Array shapes or dimensions are inconsistent."""


class ConfigError(RandcalError, ValueError):
    """Invalid configuration, missing files, or malformed options."""


class ParseError(RandcalError, ValueError):
    """Malformed input data (CSV cells, checkpoint documents)."""


class TrainingError(RandcalError, RuntimeError):
    """Training diverged or received non-finite gradients."""


class ContractError(RandcalError, RuntimeError):
    """An internal usage contract was violated (e.g. stale forward trace)."""


class LossSpecError(RandcalError, ValueError):
    """A loss specification violates its declared properties."""
