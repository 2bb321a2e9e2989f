"""Exception hierarchy shared by the numerical modules and the CLI."""


class DPPSelectError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 4


class ConfigError(DPPSelectError):
    exit_code = 2


class DataError(DPPSelectError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, line, column, message="could not parse"):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class NonNumericCell(ParseError):
    def __init__(self, line, column, value):
        self.value = value
        super().__init__(line, column, f"non-numeric cell {value!r}")


class MissingColumn(DataError):
    pass


class DimensionMismatch(DPPSelectError, ValueError):
    pass


class ConstantColumn(DPPSelectError, ValueError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"column {column} is constant; cannot standardize")


class RankDeficient(DPPSelectError, ValueError):
    pass


class SingularCovariance(DPPSelectError, ValueError):
    pass


class TooLarge(DPPSelectError, ValueError):
    pass


class OptimizationFailed(DPPSelectError, RuntimeError):
    pass


class DegenerateStep(DPPSelectError, RuntimeError):
    pass


class AllZeroDifferences(DPPSelectError, ValueError):
    pass
