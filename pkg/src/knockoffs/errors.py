"""Exception hierarchy shared by all modules."""


class KnockoffError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(KnockoffError, ValueError):
    pass


class ResourceLimitError(KnockoffError):
    """An exhaustive enumeration or grid would exceed its configured guard."""


class ConstructionError(KnockoffError):
    pass


class InvalidDensityError(KnockoffError, ValueError):
    pass


class InvalidTestFunctionError(KnockoffError, ValueError):
    pass


class NumericIntegrityError(KnockoffError, ArithmeticError):
    pass


class BoundaryError(KnockoffError, ValueError):
    """A marginal transform landed exactly on 0 or 1."""


class UnsupportedModelError(KnockoffError, NotImplementedError):
    pass


class DegenerateError(KnockoffError, ArithmeticError):
    """Conditioning on (or dividing by) a zero-probability quantity."""


class ConfigError(KnockoffError, ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
