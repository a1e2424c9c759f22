"""Exception hierarchy shared across the package."""


class MartiDroError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(MartiDroError, ValueError):
    """Array arguments have incompatible shapes."""


class DegenerateInput(MartiDroError, ValueError):
    """Input leaves the problem undefined (e.g. both penalty weights zero)."""


class UnsupportedLoss(MartiDroError, TypeError):
    """The requested closed form only exists for a different loss family."""


class ZeroBeta(MartiDroError, ValueError):
    """Subgradient oracle queried at a parameter vector with no transportable part."""


class NonpositiveRho(MartiDroError, ValueError):
    """Transport budget must be nonnegative (strictly positive where required)."""


class NonpositiveRadius(MartiDroError, ValueError):
    """Dual evaluation needs strictly positive budget and slack radius."""


class InvalidConstants(MartiDroError, ValueError):
    """Curvature constants violate 0 <= mu <= smoothness."""


class ParseError(MartiDroError, ValueError):
    """A data file could not be parsed.

    Carries the 1-based line number, the character column of the offending
    token, and a human-readable reason.
    """

    def __init__(self, line: int, column: int, reason: str):
        self.line = line
        self.column = column
        self.reason = reason
        super().__init__(f"line {line}, column {column}: {reason}")
