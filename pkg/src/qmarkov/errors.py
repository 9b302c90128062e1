"""Exception hierarchy.

Every error raised deliberately by the package derives from
:class:`QMarkovError`, which is itself a :class:`ValueError` so callers that
only care about bad input can catch the builtin.
"""


class QMarkovError(ValueError):
    pass


# chain construction
class ZeroRow(QMarkovError):
    pass


class UnknownLabel(QMarkovError):
    pass


class TooFewStates(QMarkovError):
    pass


class BadDimension(QMarkovError):
    pass


class DimensionMismatch(QMarkovError):
    pass


class NotConverged(QMarkovError):
    pass


class SingularFundamental(QMarkovError):
    pass


class BadParams(QMarkovError):
    pass


# statevector
class AllMassTruncated(QMarkovError):
    pass


class NotUnitary(QMarkovError):
    pass


class BadTarget(QMarkovError):
    pass


class ZeroSuccess(QMarkovError):
    pass


# block encodings
class NotPermutationDecomposable(QMarkovError):
    pass


class AlphaTooSmall(QMarkovError):
    pass


class TooLarge(QMarkovError):
    pass


# amplification / engine
class AmplitudeBelowBound(QMarkovError):
    pass


class ZeroNorm(QMarkovError):
    pass


class BadGamma(QMarkovError):
    pass


# ingestion
class ParseError(QMarkovError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonSquare(QMarkovError):
    pass


class NegativeCount(QMarkovError):
    pass
