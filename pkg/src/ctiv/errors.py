"""Exception hierarchy shared across the package.

Errors split into two families: data problems (bad input files, schema
mismatches, degenerate splits) and estimation problems (separation,
empty arms, rank deficiency). The CLI maps the families to distinct
exit codes.
"""


class CtivError(Exception):
    """Base class for every error raised by this package."""


# --- data / validation family ---

class SchemaError(CtivError):
    """A required column is missing or the column mapping is wrong."""


class ValidationError(CtivError):
    """Input values violate a documented constraint (non-binary arm, NaN...)."""


class MissingValueError(CtivError):
    """A blank cell where a value is required."""


class InputError(CtivError):
    """Malformed arguments: wrong shape, non-finite values, bad dimension."""


class DomainError(CtivError):
    """A probability or parameter outside its mathematical domain."""


class SplitError(CtivError):
    """Holdout fractions that cannot produce a usable partition."""


class EmptyDatasetError(CtivError):
    """No units survive trimming or subsetting."""


class CalibrationError(CtivError):
    """A synthetic generator missed its target correlations."""


# --- estimation family ---

class EstimationError(CtivError):
    """An estimator could not produce a finite, identified answer."""


class SeparationError(EstimationError):
    """Perfectly separated logistic fit with no ridge penalty."""


class EmptyArmError(EstimationError):
    """A leaf or sample with one assignment arm empty."""


class GrowthError(EstimationError):
    """Tree growth impossible under the configured constraints."""


class NoCompliersError(EstimationError):
    """Estimated complier share is zero or negative."""


class AggregationError(EstimationError):
    """A weighted aggregate has no mass to average over."""


DATA_ERRORS = (
    SchemaError,
    ValidationError,
    MissingValueError,
    InputError,
    DomainError,
    SplitError,
    EmptyDatasetError,
    CalibrationError,
)

ESTIMATION_ERRORS = (EstimationError,)
