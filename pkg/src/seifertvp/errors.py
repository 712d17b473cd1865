"""Exception hierarchy shared by all modules."""


class SeifertError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SeifertError, ValueError):
    pass


class IntegrationError(SeifertError, RuntimeError):
    pass


class MapError(SeifertError, ValueError):
    pass


class PreconditionError(SeifertError, ValueError):
    pass


class InsufficientDataError(SeifertError, ValueError):
    pass


class SearchError(SeifertError, RuntimeError):
    pass


class QuadratureError(SeifertError, RuntimeError):
    pass


class CalibrationError(SeifertError, RuntimeError):
    pass


class TilingError(SeifertError, ValueError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class MatchingError(SeifertError, ValueError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class GraphError(SeifertError, ValueError):
    pass


class GluingError(SeifertError, ValueError):
    pass


class LedgerError(SeifertError, ValueError):
    pass
