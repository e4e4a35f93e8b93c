"""Exception hierarchy. Each error maps to a CLI exit code."""


class GogError(Exception):
    exit_code = 2


class ParseError(GogError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(GogError):
    pass


class DisconnectedGraph(ValidationError):
    pass


class NonGroupTable(ValidationError):
    pass


class NonInjectiveInclusion(ValidationError):
    pass


class NonpositiveLength(ValidationError):
    pass


class MalformedWord(GogError):
    pass


class BallBudgetExceeded(GogError):
    exit_code = 3


class NotCollapsible(GogError):
    pass


class InvalidEmbedding(GogError):
    pass


class ElementAlreadyInEdgeGroup(GogError):
    pass


class NotRepresentable(GogError):
    pass


class ChainDiverges(GogError):
    pass


class InvalidMarking(GogError):
    pass


class ExplosionGuard(GogError):
    exit_code = 3


class CollapsedEdgeInForest(GogError):
    pass


class NotMinimal(GogError):
    exit_code = 4


class ZeroLengthComponent(GogError):
    pass


class WitnessWouldFold(GogError):
    exit_code = 4


class SearchExhausted(GogError):
    exit_code = 3


class InternalInvariant(GogError):
    exit_code = 4
