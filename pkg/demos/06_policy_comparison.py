"""
Comparing policies on common random numbers
===========================================

Every policy sees the same simulated order stream, so paired differences
have much tighter intervals than the separate estimates.
"""
from stochknap import ProblemInstance, compare_policies, solve_dp, solve_unit
from stochknap.model import discretize
from stochknap.sim import DPTable, EqualSpaced, FCFS, SwitchOver

inst = ProblemInstance.build([1.0, 0.8, 0.65, 0.45], [0.2, 0.3, 0.1, 0.4], W=12, T=20.0)
table = solve_dp(discretize(inst, 0.05))
policies = [DPTable(table, 0.05), SwitchOver.from_solution(solve_unit(inst)), EqualSpaced(4, 20.0), FCFS()]

cmp = compare_policies(inst, policies, replications=40_000, seed=1)
for row in cmp.rows(12, 20.0):
    print(f"{row['policy']:>7}: {row['mean']:.4f} +- {row['ci99']:.4f}  ({row['pct_off_best']:.2f}% off best)")
for (a, b), (diff, half) in cmp.differences.items():
    print(f"{a} - {b}: {diff:+.4f} +- {half:.4f}")
