"""Exception hierarchy for qdt_choice."""


class QDTChoiceError(Exception):
    """Base class for all package errors."""


class DataError(QDTChoiceError):
    """Problems with input trial data."""


class MalformedRow(DataError):
    """A CSV row has the wrong column count or an unparsable value."""


class InvariantViolation(DataError):
    """A record violates a domain invariant."""


class EmptyFile(DataError):
    """The input file holds no data rows."""


class OrderingError(DataError):
    """Trial indices are not strictly increasing within a block."""


class TooFewTrials(DataError):
    """Not enough trials for the requested number of folds."""


class DomainError(QDTChoiceError, ValueError):
    """A numeric argument lies outside the function's domain."""


class ConstraintViolation(QDTChoiceError):
    """Probability constraints of the model were broken."""


class MissingParams(QDTChoiceError):
    """Fitted parameters needed by a command were not found."""


class InvalidDescriptor(QDTChoiceError, ValueError):
    """An experiment descriptor cannot produce a valid trial schedule."""


class NoCatchTrials(DataError):
    """The catch-trial ablation needs at least one catch trial."""


class LengthMismatch(QDTChoiceError, ValueError):
    """Paired sequences differ in length."""


class Empty(QDTChoiceError, ValueError):
    """A metric was asked for on an empty sequence."""
