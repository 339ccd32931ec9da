"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class CarbonClearError(Exception):
    """Base class for all domain errors raised by carbon_clear."""

    kind = "Error"


class DimensionMismatch(CarbonClearError, ValueError):
    kind = "DimensionMismatch"


class InvalidDimension(CarbonClearError, ValueError):
    kind = "InvalidDimension"


class MarginalMismatch(CarbonClearError, ValueError):
    kind = "MarginalMismatch"


class EmptyGeneratorSet(CarbonClearError, ValueError):
    kind = "EmptyGeneratorSet"


class UnknownConsumer(CarbonClearError, KeyError):
    kind = "UnknownConsumer"

    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else ""


class SolverError(CarbonClearError, RuntimeError):
    """The LP backend failed in a way that points at a defect, not at the input."""

    kind = "SolverError"


class Infeasible(SolverError):
    kind = "Infeasible"


class IterationLimit(SolverError):
    kind = "IterationLimit"


class VerificationError(CarbonClearError):
    """A solution failed its KKT / equilibrium audit."""

    kind = "VerificationError"

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class CaseFormatError(CarbonClearError, ValueError):
    """Base for problems reading case documents and CSV directories."""

    kind = "CaseFormatError"


class CaseSyntaxError(CaseFormatError):
    kind = "SyntaxError"


class SchemaError(CaseFormatError):
    kind = "SchemaError"


class MissingFile(CaseFormatError):
    kind = "MissingFile"


class HeaderMismatch(CaseFormatError):
    kind = "HeaderMismatch"


class BadNumber(CaseFormatError):
    kind = "BadNumber"

    def __init__(self, message: str, row: int, column: str):
        super().__init__(message)
        self.row = row
        self.column = column
