"""Exception hierarchy shared across the package.

Errors are grouped by the CLI exit code they map to: :class:`DataError`
subclasses exit with 2, :class:`ModelError` subclasses with 3.
"""


class PrimeEstateError(Exception):
    """Base class for every error raised by this package."""


class DataError(PrimeEstateError):
    pass


class ModelError(PrimeEstateError):
    pass


class MissingHeader(DataError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__(f"CSV header is missing columns: {', '.join(self.missing)}")


class EmptyFile(DataError):
    pass


class TypeMismatch(DataError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r}")


class UnknownCategory(DataError):
    def __init__(self, column, value):
        self.column = column
        self.value = value
        super().__init__(f"value {value!r} is not in the vocabulary of {column!r}")


class DegenerateColumn(DataError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"continuous column {name!r} has a non-positive training maximum")


class InfeasibleProfile(DataError):
    pass


class ZeroVariance(DataError):
    def __init__(self, name="y"):
        self.name = name
        super().__init__(f"{name} has zero variance")


class RankDeficient(DataError):
    pass


class Singular(RankDeficient):
    pass


class Underdetermined(DataError):
    pass


class TooFewRows(DataError):
    pass


class DimensionMismatch(ModelError):
    def __init__(self, expected, got):
        self.expected = expected
        self.got = got
        super().__init__(f"expected {expected} features, got {got}")


class KTooLarge(ModelError):
    def __init__(self, k, n):
        super().__init__(f"k={k} exceeds the number of training rows ({n})")


class EmptyTrainingSet(ModelError):
    pass


class NonFiniteLoss(ModelError):
    def __init__(self, epoch, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"loss became non-finite ({loss}) at epoch {epoch}")


class ExperimentFailed(ModelError):
    """Wraps a model error with the (repetition, fold) coordinate it occurred at."""

    def __init__(self, spec_id, repetition, fold, cause):
        self.spec_id = spec_id
        self.repetition = repetition
        self.fold = fold
        self.cause = cause
        super().__init__(f"{spec_id} failed at repetition {repetition}, fold {fold}: {cause}")


class NoConvergence(UserWarning):
    """Emitted (as a warning) when an iterative solver hits its iteration cap."""
