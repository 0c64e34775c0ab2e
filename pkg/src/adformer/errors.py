"""Exception types shared across the package."""


class AdformerError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(AdformerError):
    """Tensor dimensions are inconsistent with the requested operation."""


class ContractError(AdformerError):
    """A documented precondition of an operation was violated."""


class NumericError(AdformerError):
    """Non-finite values or a numeric failure were encountered."""


class ConfigError(AdformerError):
    """A configuration object or file is invalid."""


class CompatibilityError(AdformerError):
    """Checkpoint, config and data do not fit together."""
