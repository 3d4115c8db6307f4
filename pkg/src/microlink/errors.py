"""Exception types raised across the package."""


class MicrolinkError(Exception):
    """Base class for all microlink errors."""


# -- tabular data ------------------------------------------------------------

class MissingColumnError(MicrolinkError):
    """A schema feature name is absent from a CSV header."""


class DuplicateIdError(MicrolinkError):
    """Two rows share the same id value."""


class EmptyFileError(MicrolinkError):
    """A CSV file has no header or no data rows."""


class AllMissingColumnError(MicrolinkError):
    """A continuous column is entirely missing, so no mean exists."""


class NegativeValueError(MicrolinkError):
    """A log transform was requested on a column containing negative values."""


# -- LSH ---------------------------------------------------------------------

class SchemeMismatchError(MicrolinkError):
    """bands * rows does not equal the signature length."""


# -- classifiers -------------------------------------------------------------

class UnknownLabelValueError(MicrolinkError):
    """A label cell holds a value outside the positive/negative vocabulary."""


class SingleClassError(MicrolinkError):
    """Training data contains only one class."""


class DegenerateDataError(MicrolinkError):
    """Every feature column has zero variance."""


class DimensionMismatchError(MicrolinkError):
    """A probe vector's length differs from the training feature count."""


class WrongModelKindError(MicrolinkError):
    """An operation was applied to an unsupported model kind."""


# -- ensembles ---------------------------------------------------------------

class InvalidSpecError(MicrolinkError):
    """An ensemble specification violates its invariants."""


class EmptyGridError(MicrolinkError):
    """A hyperparameter grid contains no points."""


# -- semi-supervised ---------------------------------------------------------

class SingleClassLabeledError(MicrolinkError):
    """The labeled seed set contains only one class."""


# -- ranking -----------------------------------------------------------------

class EmptyTrainingError(MicrolinkError):
    """No usable rows to fit the conditional-probability tables."""


class UnfittedModelError(MicrolinkError):
    """score() was called on a model without fitted tables."""


class NoCandidatesError(MicrolinkError):
    """rank_candidates() received an empty candidate list."""


# -- pipeline ----------------------------------------------------------------

class InvalidConfigError(MicrolinkError):
    """A pipeline config file is malformed or structurally wrong."""


class InvalidParamsError(MicrolinkError):
    """Synthetic-generator parameters are out of range."""


class NoPositivesError(MicrolinkError):
    """Training assembly found no positively labeled records."""


class UnknownEventError(MicrolinkError):
    """A ranking references an event absent from the ground truth."""
