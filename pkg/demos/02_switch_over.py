"""
Switch-over policies
====================

A switch-over policy opens the price classes one at a time at fixed times.
The best switch times solve a small convex program, and the result is checked
against simulation.
"""
import numpy as np

from stochknap import ProblemInstance, kkt_check, simulate, solve_unit
from stochknap.sim import SwitchOver

inst = ProblemInstance.build([1.0, 0.8, 0.65, 0.45], [0.2, 0.3, 0.1, 0.4], W=12, T=20.0)
sol = solve_unit(inst)

print("switch times:", np.round(sol.t, 3))
print("time spent with k classes open:", np.round(sol.y, 3))
print(f"expected revenue: {sol.objective_revenue:.4f}")
print(f"largest KKT residual: {kkt_check(inst, sol).max_residual:.1e}")

est = simulate(inst, SwitchOver.from_solution(sol), replications=100_000, seed=0)
print(f"simulated revenue: {est.mean:.4f} +- {est.half_width:.4f} (99%)")
