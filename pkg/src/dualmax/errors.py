"""Exception hierarchy shared by every dualmax module."""


class DualMaxError(Exception):
    """Base class for all library errors."""


class ModelError(DualMaxError, ValueError):
    """A market, cone or utility description is invalid."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class NonPositivePrice(ModelError):
    pass


class ProbabilityNotNormalized(ModelError):
    pass


class RaggedTree(ModelError):
    pass


class ParseError(ModelError):
    pass


class DimensionMismatch(DualMaxError, ValueError):
    pass


class MissingNode(DualMaxError, KeyError):
    pass


class NonPositivePoint(DualMaxError, ValueError):
    pass


class NegativeArgument(DualMaxError, ValueError):
    pass


class OutsideDomain(DualMaxError, ValueError):
    pass


class InfeasibleDualDomain(DualMaxError):
    """No normalized element of the dual cone exists (arbitrage under the cone)."""


class NodeDecompositionFailure(DualMaxError):
    """Per-node hedge could not be found although the dual domain is feasible."""


class WealthBelowEndowmentBound(DualMaxError):
    def __init__(self, wealth, bound):
        super().__init__(
            f"initial wealth {wealth!r} does not exceed the endowment bound {bound!r}"
        )
        self.wealth = wealth
        self.bound = bound


class AssumptionFailure(DualMaxError):
    def __init__(self, failures):
        super().__init__("assumptions failed: " + ", ".join(failures))
        self.failures = list(failures)


class NoConvergence(DualMaxError):
    def __init__(self, gap, tol):
        super().__init__(f"certified duality gap {gap:.3e} above tolerance {tol:.1e}")
        self.gap = gap
        self.tol = tol


class DualUnboundedBelow(DualMaxError):
    pass


class RelationViolated(DualMaxError):
    def __init__(self, which, magnitude):
        super().__init__(f"relation {which!r} violated by {magnitude:.3e}")
        self.which = which
        self.magnitude = magnitude


class DimensionTooLarge(DualMaxError, ValueError):
    pass


class EmptyFeasibleGrid(DualMaxError):
    pass
