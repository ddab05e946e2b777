"""Exception hierarchy.

Every error carries a short machine-readable ``code`` which the CLI prints as
``ERROR <code>: <message>``. ``ValidationError`` subclasses map to exit code 1,
everything else to exit code 2.
"""


class TinySweepError(Exception):
    code = "runtime"


class ValidationError(TinySweepError):
    code = "validation"


class ConfigError(ValidationError):
    code = "config"


class MissingColumn(ValidationError):
    code = "missing_column"

    def __init__(self, name):
        super().__init__(f"column {name!r} not found in CSV header")
        self.name = name


class NonNumericValue(ValidationError):
    code = "non_numeric"

    def __init__(self, row, col, value=None):
        super().__init__(f"row {row}, column {col!r}: cannot parse {value!r}")
        self.row = row
        self.col = col


class EmptyFile(ValidationError):
    code = "empty_file"


class UnknownLabel(ValidationError):
    code = "unknown_label"


class InvalidReduction(ValidationError):
    code = "invalid_reduction"


class SingleSubjectWithBySubjectPolicy(ValidationError):
    code = "single_subject"


class ShapeMismatch(ValidationError):
    code = "shape_mismatch"


class LengthTooShort(ValidationError):
    code = "length_too_short"


class InvalidSpec(ValidationError):
    code = "invalid_spec"


class InvalidFraction(ValidationError):
    code = "invalid_fraction"


class EmptyCalibrationSet(ValidationError):
    code = "empty_calibration"


class MissingBaseline(ValidationError):
    code = "missing_baseline"


class MissingReport(ValidationError):
    code = "missing_report"


class FormatError(ValidationError):
    """Binary artifact has a bad magic, version, or truncated payload."""

    code = "format"


class DivergenceDetected(TinySweepError):
    code = "divergence"


class AccumulatorOverflow(TinySweepError):
    code = "accumulator_overflow"


class ZeroMax(TinySweepError):
    code = "zero_max"


class RecordingShorterThanWindow(UserWarning):
    """A recording (or subject segment) produced zero windows; not fatal."""
