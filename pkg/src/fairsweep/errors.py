"""Exception hierarchy shared across the package.

Every error category maps to a CLI exit code (see cli.py), so raising the
right class matters for scriptability.
"""


class FairsweepError(Exception):
    """Base class for all package errors."""


class ConfigError(FairsweepError):
    """Invalid configuration: bad grid axes, thresholds, fold counts, keys."""


class SchemaError(ConfigError):
    """Column schema does not match the data file."""


class DataError(FairsweepError):
    """Data violates a precondition (non-binary label, non-finite features)."""


class ContractError(FairsweepError):
    """Caller violated an API contract (length/dimension mismatch)."""


class FitError(FairsweepError):
    """Model fitting failed (e.g. single-class weighted training data)."""


class CapabilityError(FairsweepError):
    """A component lacks a required capability (e.g. sample weights)."""


class NotImplementedMitigationError(ConfigError):
    """A reserved mitigation id was requested but is not implemented."""


class NoDefinedCostError(FairsweepError):
    """No grid cell produced a defined cost; selection is impossible."""
