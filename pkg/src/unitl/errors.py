"""Exception hierarchy shared by every module."""


class TransferError(Exception):
    """Base class for all errors raised by unitl."""


class TauOutOfRange(TransferError, ValueError):
    pass


class RhoOutOfRange(TransferError, ValueError):
    pass


class DimensionMismatch(TransferError, ValueError):
    pass


class NumericalFailure(TransferError, ArithmeticError):
    pass


class InvalidParams(TransferError, ValueError):
    pass


class InsufficientData(TransferError, ValueError):
    pass


class EmptyTable(TransferError, ValueError):
    pass


class EmptyInput(TransferError, ValueError):
    pass


class DegenerateDenominator(TransferError, ArithmeticError):
    """The closed-form optimum is undefined for these moments."""


class ChildFailure(TransferError, RuntimeError):
    """An external source-model process exited with a nonzero status."""


class ProtocolError(TransferError, RuntimeError):
    """An external source-model process produced malformed output."""


class ModelFormatError(TransferError, ValueError):
    """A model or task file could not be interpreted."""
