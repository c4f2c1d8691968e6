"""Exception types shared across the package.

The CLI maps these onto exit codes: data/contract problems exit 2,
numeric failures exit 3.
"""


class MafnError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(MafnError):
    """A caller violated a documented precondition."""


class DimensionError(ContractError):
    """Operand shapes are incompatible for the requested operation."""


class DataError(MafnError):
    """Input data violates the expected structure or invariants."""


class ParseError(DataError):
    """A file could not be parsed; message carries line context."""


class NumericError(MafnError):
    """A computation produced NaN or otherwise numerically failed."""
