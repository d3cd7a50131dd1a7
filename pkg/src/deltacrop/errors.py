"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: data/format problems exit with 3,
contract and leakage violations with 4.
"""


class DeltaCropError(Exception):
    """Base class for all package errors."""


class DimensionError(DeltaCropError, ValueError):
    """Tensor shapes are incompatible for an operation."""


class ContractError(DeltaCropError, ValueError):
    """A precondition of an operation was violated."""


class LeakageError(ContractError):
    """Train and validation/test parcel sets overlap."""


class FormatError(DeltaCropError):
    """A file does not follow its declared format."""


class TruncationError(FormatError):
    """A payload is shorter or longer than its header implies."""


class SchemaError(FormatError):
    """A header field is missing or carries an unknown value."""


class UnknownBand(DeltaCropError, KeyError):
    """A band token is not available for the sensor or stack."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown band"
