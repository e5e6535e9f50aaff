"""
Orders of random size
=====================

When each order asks for a random number of units, expected leftover stock is
computed from the inventory Markov chain.  Here orders follow a negative
binomial law shifted to start at one unit.
"""
import numpy as np

from stochknap import ProblemInstance, solve_continuous, solve_homogeneous
from stochknap.batch import BatchKernel
from stochknap.model import BatchDistribution
from stochknap.switchover import revenue_for_durations

law = BatchDistribution.negative_binomial(4, 0.33)
print(f"mean order size: {law.mean:.3f}")

kernel = BatchKernel.from_distribution(law, 60)
for mu in (2.0, 5.0, 10.0, 20.0):
    print(f"expected leftover of 60 units after mean {mu:>4} orders: {kernel.value(mu):.3f}")

inst = ProblemInstance.build([1.0, 0.8, 0.65, 0.45], [0.2, 0.3, 0.1, 0.4], W=60, T=20.0, batch=law)
best = solve_continuous(inst).optimal_value
switch = solve_homogeneous(inst).objective_revenue
equal = revenue_for_durations(inst, np.full(4, 5.0))
for name, v in (("optimal", best), ("switch-over", switch), ("equal spacing", equal)):
    print(f"{name:>14}: {v:8.3f}  ({100 * (best - v) / best:.2f}% off)")
