"""Exception types raised across the package."""


class TensorBalanceError(Exception):
    """Base class for all package errors."""


class NotAPartialOrder(TensorBalanceError):
    """The supplied relation violates a partial-order axiom.

    Carries a witness pair (or triple) in ``args`` for diagnostics.
    """


class NoBottom(TensorBalanceError):
    """The poset has no least element."""


class NonPositiveEntry(TensorBalanceError):
    """A probability vector contains an entry <= 0."""


class OverflowRisk(TensorBalanceError):
    """A log-domain prefix sum exceeds the configured bound."""


class NonPositiveResult(TensorBalanceError):
    """Moebius reconstruction produced a non-positive probability.

    Signals eta values outside the feasible polytope, e.g. an
    overshooting projection step.
    """


class SingularJacobian(TensorBalanceError):
    """The Newton linear solve failed; ``condition`` holds an estimate."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class SizeCap(TensorBalanceError):
    """A requested dense object exceeds the configured size budget."""


class PermutationFailed(TensorBalanceError):
    """Index reordering did not reach a fixpoint satisfying the
    per-mode monotonicity condition on slice minima."""


class EmptySupport(TensorBalanceError):
    """The input array has no positive entry."""


class BottomMissing(TensorBalanceError):
    """The corner entry (1, ..., 1) is zero after preprocessing."""


class UnequalSides(TensorBalanceError):
    """Zero-slice removal left modes with different lengths."""


class ZeroFiber(TensorBalanceError):
    """A fiber is entirely zero, so fiber normalization is undefined."""


class ParseError(TensorBalanceError):
    """Malformed input file; ``line`` holds the 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)
        self.line = line


class NegativeEntry(TensorBalanceError):
    """A loaded array contains a negative value."""


class IndexOutOfRange(TensorBalanceError):
    """A coordinate-file index lies outside the declared shape."""
