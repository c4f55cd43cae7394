"""Lost-sales inventory with lead times: constant-order policies, exact DP and bounds."""
from .demand import DemandDistribution, from_config, from_pmf, newsvendor, truncate_family
from .dp import DPConfig, TablePolicy, evaluate_policy, opt_ratio, solve
from .lindley import stationary_waiting, theta
from .policy import best_constant_z, make_base_stock, make_constant_order, stationary_cost
from .sim import simulate, window_cost_formula

__all__ = [
    "DemandDistribution",
    "DPConfig",
    "TablePolicy",
    "best_constant_z",
    "evaluate_policy",
    "from_config",
    "from_pmf",
    "make_base_stock",
    "make_constant_order",
    "newsvendor",
    "opt_ratio",
    "simulate",
    "solve",
    "stationary_cost",
    "stationary_waiting",
    "theta",
    "truncate_family",
    "window_cost_formula",
]
