"""Exception hierarchy shared by all encagg modules."""


class EncAggError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(EncAggError, ValueError):
    pass


class DegenerateCovariance(EncAggError):
    """All gradients coincide, so there is no principal direction."""


class InconsistentLabels(EncAggError):
    """The two root clients landed in different non-noise clusters."""


class NonFiniteLoss(EncAggError, FloatingPointError):
    pass


class EmptySelection(EncAggError, ValueError):
    pass


class SearchFailed(EncAggError):
    pass


class ConfigError(EncAggError, ValueError):
    """Raised on a bad experiment config; the message names the key (and line when known)."""

    def __init__(self, message, key=None, line=None):
        self.message = message
        self.key = key
        self.line = line
        where = ""
        if key is not None:
            where = f"{key}: "
        if line is not None:
            where = f"line {line}: " + where
        super().__init__(where + message)
