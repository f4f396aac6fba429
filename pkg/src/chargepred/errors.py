"""Exception hierarchy shared across the package."""


class ChargePredError(Exception):
    """Base class for all package errors."""


class DimensionError(ChargePredError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(ChargePredError, ValueError):
    """A precondition of an operation was violated."""


class EmptyInputError(ContractError):
    pass


class IngestionError(ChargePredError):
    """Input data could not be loaded."""


class FormatError(IngestionError):
    """A file does not follow its expected layout."""


class ConfigError(ChargePredError, ValueError):
    pass


class DivergenceError(ChargePredError, FloatingPointError):
    """Training produced a non-finite loss."""
