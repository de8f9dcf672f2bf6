"""Exception hierarchy shared by every protocol stage."""


class QKDError(Exception):
    """Base class for all simulator errors."""


class SessionClosed(QKDError):
    """A message was sent on a channel after the session aborted."""


class LengthMismatch(QKDError):
    pass


class EmptyKey(QKDError):
    pass


class InsufficientKey(QKDError):
    """A protocol step needs more key bits than remain."""


class OutOfRange(QKDError):
    pass


class ParityAgrees(QKDError):
    """Bisection was requested on a block whose parities already match."""


class NotConverged(QKDError):
    """Reconciliation hit max_rounds without enough clean rounds in a row."""


class SafetyViolation(QKDError):
    """s >= n - t: no secure key can be distilled."""


class DimensionMismatch(QKDError):
    pass


class KeyTooShort(QKDError):
    pass


class KeyReuse(QKDError):
    """An authentication key was presented for a second verification."""


class ConfigInvalid(QKDError):
    """Configuration failed validation.

    ``problems`` maps field name to a human readable diagnostic.
    """

    def __init__(self, problems):
        self.problems = dict(problems)
        detail = "; ".join(f"{k}: {v}" for k, v in self.problems.items())
        super().__init__(f"invalid configuration: {detail}")
