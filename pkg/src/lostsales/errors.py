"""Exception hierarchy shared by every module of the package."""


class LostSalesError(Exception):
    """Base class for all package errors."""


class ConfigError(LostSalesError):
    """Malformed experiment or demand configuration."""


class NonStochastic(LostSalesError, ValueError):
    """Probabilities are negative or do not sum to one."""


class Deterministic(LostSalesError, ValueError):
    """Demand puts all of its mass on a single point."""


class NegativeAtom(LostSalesError, ValueError):
    """Demand support contains a negative value."""


class BadParameter(LostSalesError, ValueError):
    """Family parameter, tolerance or epsilon outside its admissible range."""


class RateTooHigh(LostSalesError, ValueError):
    """Order rate is not strictly below mean demand."""


class LatticeMismatch(LostSalesError, ValueError):
    """A quantity cannot be represented on a (refined) demand lattice."""


class NoConvergence(LostSalesError, RuntimeError):
    """Iterative solver ran out of its iteration budget."""


class BudgetExceeded(LostSalesError, RuntimeError):
    """Enumeration or scenario count exceeds the configured budget."""


class StateBudgetExceeded(BudgetExceeded):
    """Dynamic program would need more states than allowed."""


class CapTooTight(LostSalesError, RuntimeError):
    """Inventory cap of the dynamic program influences the optimal value."""


class RStarDegenerate(LostSalesError, ValueError):
    """Mean order rate of the lower-bound pipeline is not below mean demand."""


class BadEpsilon(BadParameter):
    """Accuracy target outside (0, 1)."""
