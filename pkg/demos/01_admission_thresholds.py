"""
Optimal admission control by dynamic programming
=================================================

Four price classes share 12 units over 20 time units.  We solve the
discretized DP and read off, for each class, the first period in which it is
accepted at each stock level.
"""
import numpy as np

from stochknap import ProblemInstance, solve_continuous, solve_dp, extract_thresholds
from stochknap.model import discretize

inst = ProblemInstance.build([1.0, 0.8, 0.65, 0.45], [0.2, 0.3, 0.1, 0.4], W=12, T=20.0)

# a step of 0.05 keeps the per-period arrival probability at 0.05
disc = discretize(inst, 0.05)
table = solve_dp(disc)
print(f"DP value with {disc.periods} periods: {table.optimal_value:.4f}")
print(f"continuous-time value:          {solve_continuous(inst).optimal_value:.4f}")

# thresholds drop (open earlier) as stock grows, and cheaper classes open later
prof = extract_thresholds(table)
np.set_printoptions(linewidth=120)
print("first accepting time by class (rows) and stock d = 1..12 (columns):")
print(np.round((prof.t[:, 1:] - 1) * 0.05, 2))
print("violations of the threshold structure:", len(prof.violations))
