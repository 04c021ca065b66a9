"""Exception hierarchy.

The CLI maps :class:`BudgetExceededError` to exit code 3 and every other
:class:`FastPDError` to exit code 2.
"""


class FastPDError(Exception):
    """Base class for all errors raised by this package."""


class ModelFormatError(FastPDError):
    """A model document is malformed or internally inconsistent."""


class UnsupportedModelError(ModelFormatError):
    """A model uses a construct the estimator is not defined for."""


class DataError(FastPDError):
    """Input data is malformed, empty or non-finite."""


class EmptyDataError(DataError):
    """A table with no data rows."""


class DimensionError(FastPDError):
    """Shapes of models, data and subsets do not agree."""


class BudgetExceededError(FastPDError):
    """Augmentation would need more partition lists than allowed."""
