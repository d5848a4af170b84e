"""Exception types shared across the package."""


class KronographError(Exception):
    """Base class for all package errors."""


class ShapeError(KronographError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(KronographError, ValueError):
    """A call violated a documented precondition."""


class DomainError(KronographError, ValueError):
    """Input lies outside the mathematical domain of an operation."""


class NumericError(KronographError, FloatingPointError):
    """A computation produced NaN or Inf."""
