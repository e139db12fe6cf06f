"""Exception types raised across the package."""


class FactsError(Exception):
    """Base class for all package errors."""


class DimensionError(FactsError, ValueError):
    """Operand shapes are incompatible."""


class ConfigError(FactsError, ValueError):
    """A configuration value is out of range or inconsistent."""


class ContractError(FactsError, RuntimeError):
    """An API precondition was violated by the caller."""


class NonFiniteError(FactsError, FloatingPointError):
    """An operation produced NaN or Inf."""


class ParseError(FactsError, ValueError):
    """A data file could not be parsed."""


class SchemaError(FactsError, ValueError):
    """A data file does not have the expected layout."""


class CompatibilityError(FactsError, ValueError):
    """A checkpoint does not match the model described by a config."""


class TrainingDiverged(FactsError, RuntimeError):
    """The training loss became non-finite."""

    def __init__(self, message, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path
