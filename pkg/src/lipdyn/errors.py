"""Exception hierarchy shared by all lipdyn modules."""

from __future__ import annotations


class LipdynError(Exception):
    """Base class for every error raised by lipdyn."""


class DomainError(LipdynError):
    """A point lies outside the declared domain of a map."""


class EvalError(LipdynError):
    """An expression produced an undefined value (log of a nonpositive number, 0/0, ...)."""


class ParseError(LipdynError):
    """Malformed map configuration or expression."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}, column {column})"
        super().__init__(f"{message}{where}")


class CoverageGap(LipdynError):
    """Piecewise regions leave part of the declared domain uncovered."""

    def __init__(self, lo, hi):
        self.lo = list(map(float, lo))
        self.hi = list(map(float, hi))
        super().__init__(f"pieces do not cover the sub-box lo={self.lo} hi={self.hi}")


class DegenerateRegion(LipdynError):
    """Sampling region too small to form reliable difference quotients."""


class NotInvariant(LipdynError):
    """The splitting is not invariant under the linear part."""


class NotHyperbolic(LipdynError):
    """Skewness tau(A) >= 1."""


class Singular(LipdynError):
    """The linear part (or the splitting basis) is not invertible."""


class PreconditionFailed(LipdynError):
    """A hypothesis required by a contraction argument does not hold."""


class NoConvergence(LipdynError):
    """An iteration exhausted its budget without meeting the tolerance."""


class InversionFailure(LipdynError):
    """The inner inversion of a graph transform failed at some node."""

    def __init__(self, message: str, node=None):
        self.node = node
        super().__init__(message)


class LipBlowup(LipdynError):
    """A graph iterate lost the Lip <= 1 property."""


class BoundInapplicable(LipdynError):
    """A perturbation bound has a nonpositive denominator."""


class EscapedCompactum(LipdynError):
    """A transversality iterate left the compactum K_r."""


class NotOnSet(LipdynError):
    """A point is not on the graph it is supposed to lie on."""


class NotFixed(LipdynError):
    """The given point is not a fixed point to tolerance."""


class DegenerateC(LipdynError):
    """|1 - C| is too small for the gordura condition."""


class ThresholdExceeded(LipdynError):
    """The perturbation exceeds the thresholds under which the fixed point persists."""

    def __init__(self, message: str, inequality: str | None = None):
        self.inequality = inequality
        super().__init__(message)


class OrbitEscape(LipdynError):
    """An orbit left the domain of the map."""


class ZeroConstant(LipdynError):
    """A local Lipschitz constant vanished along an orbit."""


class NotAsymptotic(LipdynError):
    """An orbit does not approach the reference periodic orbit."""


class RegraphFailure(LipdynError):
    """An iterated disk is no longer a graph over E^u inside the window."""

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        super().__init__(message)


class DepthExceeded(LipdynError):
    """Box subdivision hit its depth cap with undecided cells."""
