"""Exception hierarchy shared by all modules."""


class FlatBundleError(Exception):
    """Base class for every error raised by the package."""


class NonSpecial(FlatBundleError):
    pass


class RelationViolation(FlatBundleError):
    pass


class DegreeOverflow(FlatBundleError):
    pass


class WrongDegree(FlatBundleError):
    pass


class GridIncompatible(FlatBundleError):
    """An affine generator does not map the grid onto itself."""


class FieldMismatch(FlatBundleError):
    pass


class GroupMismatch(FlatBundleError):
    pass


class AlreadyComplex(FlatBundleError):
    pass


class RankOutOfRange(FlatBundleError):
    pass


class NotInvariant(FlatBundleError):
    pass


class NonPositiveMetric(FlatBundleError):
    pass


class GauduchonFail(FlatBundleError):
    pass


class MissingMetric(FlatBundleError):
    pass


class InconsistentMode(FlatBundleError):
    pass


class NotSemistable(FlatBundleError):
    pass


class NotPolystable(FlatBundleError):
    pass


class NotConverged(FlatBundleError):
    pass


class StepUnstable(FlatBundleError):
    pass


class NoFlatSection(FlatBundleError):
    pass


class DimensionTooSmall(FlatBundleError):
    pass


class AsthenoFail(FlatBundleError):
    pass


class OddityViolation(FlatBundleError):
    pass


class CertificateFail(FlatBundleError):
    pass


class OracleInfeasible(FlatBundleError):
    pass


class ParseError(FlatBundleError):
    def __init__(self, message, line=None, column=None, path=None):
        loc = []
        if path:
            loc.append(path)
        if line is not None:
            loc.append(f"line {line}, column {column}")
        super().__init__(f"{message} ({'; '.join(loc)})" if loc else message)
        self.line = line
        self.column = column
        self.path = path


class ValidationError(FlatBundleError):
    pass


class HeuristicSearchIncomplete(UserWarning):
    """Invariant-subspace search is not certified complete for this group."""
