"""Exception hierarchy.

UsageError maps to CLI exit code 2 (bad input/flags/files), and
PreconditionError to exit code 3 (a method's statistical precondition
failed on otherwise well-formed input).
"""


class CauselabError(Exception):
    """Base class for all library errors."""


class UsageError(CauselabError):
    """Malformed input: bad file, bad value, unknown name, invalid set."""


class PreconditionError(CauselabError):
    """A documented method precondition does not hold for the given data."""


class OverlapError(PreconditionError):
    """Positivity/overlap violation; carries the offending stratum."""

    def __init__(self, message, stratum=None):
        super().__init__(message)
        self.stratum = stratum


class WeakInstrumentError(PreconditionError):
    """First-stage relevance below the configured t-statistic threshold."""


class SeparationError(PreconditionError):
    """Perfectly separated logistic regression; MLE does not exist."""


class NonAbducibleError(PreconditionError):
    """Mechanism class does not admit exact noise abduction."""


class InconsistentEvidenceError(PreconditionError):
    """Observed evidence has zero probability under the model."""
