"""Exception hierarchy.

Everything raised for bad inputs derives from ``ValidationError`` so the CLI
can map it to exit code 1; anything else is a runtime failure.
"""


class ValidationError(ValueError):
    pass


# data
class MissingColumn(ValidationError):
    pass


class NonNumericCell(ValidationError):
    def __init__(self, path, row, column, value):
        super().__init__(f"{path}: row {row}, column {column!r}: not a number: {value!r}")
        self.row = row
        self.column = column


class EmptyFile(ValidationError):
    pass


class EmptyTable(ValidationError):
    pass


class TooFewProjects(ValidationError):
    pass


class TooFewRows(ValidationError):
    pass


class SeriesTooShort(ValidationError):
    pass


class UnknownGoal(ValidationError):
    pass


class SchemaError(ValidationError):
    pass


# cluster
class DimensionMismatch(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class LevelOutOfRange(ValidationError):
    pass


# prep
class ConstantLabel(ValidationError):
    pass


class ZeroCorrelation(ValidationError):
    pass


class SingleClass(ValidationError):
    pass


class MinorityTooSmall(ValidationError):
    pass


# learn
class UnfittedModel(ValidationError):
    pass


class InvalidBounds(ValidationError):
    pass


# metrics
class LengthMismatch(ValidationError):
    pass


class NoDefects(ValidationError):
    pass


class ZeroEffort(ValidationError):
    pass


# bellwether
class GoalMismatch(ValidationError):
    pass


class EmptyCluster(ValidationError):
    pass


class InconsistentSizes(ValidationError):
    pass


class LeakageError(RuntimeError):
    """A held-out row reached a training routine."""
