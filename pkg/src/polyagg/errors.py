"""Exception types shared across the library."""


class PolyaggError(Exception):
    """Base class for all polyagg-specific errors."""


class InfeasibleModel(PolyaggError):
    """The occupancy polytope of a model has no feasible point."""


class SingularChain(PolyaggError):
    """The average-reward stationary system is singular beyond regularization."""


class AllAgentsIndifferent(PolyaggError):
    """Reward normalization dropped every agent."""


class InfeasibleBounds(PolyaggError):
    """The lower-bounded region for welfare completion is empty."""


class DegeneratePolytope(PolyaggError):
    """The polytope has no interior relative to its affine hull."""


class ConcaveRegionEmpty(PolyaggError):
    """No policy clears every agent's density mode simultaneously."""


class MilpBudgetExhausted(PolyaggError):
    """Branch-and-bound exhausted its node budget before proving optimality."""


class SizeLimit(PolyaggError):
    """Instance exceeds a configured size or enumeration cap."""


class ZeroWelfare(PolyaggError):
    """Metric undefined because total welfare is (near) zero."""


class LpFailure(PolyaggError):
    """Unexpected LP solver failure (unbounded or numerical trouble)."""
