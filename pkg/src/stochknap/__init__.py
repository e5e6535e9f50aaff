"""Finite-horizon stochastic knapsack: exact DP, switch-over policies,
bounds, markdown pricing and a Monte Carlo policy simulator."""
from .model import (
    BatchDistribution,
    DiscretizedInstance,
    InvalidInstance,
    ProblemInstance,
    discretize,
    load_instance,
    validate,
)
from .poisson import shortfall
from .dp import solve_dp, solve_continuous, extract_thresholds
from .switchover import solve_unit, kkt_check
from .batch import solve_homogeneous, solve_price_dependent, expected_remaining
from .bounds import gap_study, lower_bound, upper_bound
from .pricing import (
    DemandFunction,
    PricingFrame,
    solve_pricing_approx,
    solve_pricing_exact,
    solve_pricing_with_p1,
)
from .sim import compare_policies, simulate

__version__ = "0.1.0"

__all__ = [
    "BatchDistribution", "DiscretizedInstance", "InvalidInstance", "ProblemInstance",
    "discretize", "load_instance", "validate", "shortfall",
    "solve_dp", "solve_continuous", "extract_thresholds", "solve_unit", "kkt_check",
    "solve_homogeneous", "solve_price_dependent", "expected_remaining",
    "gap_study", "lower_bound", "upper_bound",
    "DemandFunction", "PricingFrame", "solve_pricing_approx", "solve_pricing_exact",
    "solve_pricing_with_p1", "compare_policies", "simulate",
]
