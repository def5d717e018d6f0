"""Exception types shared across the package."""


class GmacnError(Exception):
    """Base class for all package errors."""


class ShapeError(GmacnError, ValueError):
    """Operand shapes do not conform."""


class ContractError(GmacnError, ValueError):
    """A precondition of an operation was violated."""


class ParameterError(GmacnError, ValueError):
    """An argument value is outside its allowed range."""


class FormatError(GmacnError, ValueError):
    """A file does not match its expected format."""


class CompatibilityError(GmacnError, ValueError):
    """Two artifacts were built against different montages or configurations."""


class UnavailableError(GmacnError):
    """The requested quantity is undefined for this model (e.g. an ablated branch)."""
