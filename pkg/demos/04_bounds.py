"""
Revenue bounds
==============

A fluid upper bound and a switch-over lower bound bracket the optimum.  When
stock and horizon grow together the gap grows like the square root of stock,
so the relative gap shrinks.
"""
from stochknap import ProblemInstance
from stochknap.bounds import bounds, gap_study

inst = ProblemInstance.build([1.0, 0.8, 0.65, 0.45], [0.2, 0.3, 0.1, 0.4], W=12, T=20.0)
bp = bounds(inst)
print(f"{bp.regime}: lower {bp.lower:.4f}, upper {bp.upper:.4f}")

study = gap_study(inst, [(W, W / 0.55) for W in (25, 50, 100, 200, 400, 800)])
for row in study.rows:
    print(f"W={row['W']:>4}  upper-switch gap {row['abs_gap']:7.3f}  relative {row['rel_gap']:.4f}")
print(f"log-log slope of the gap: {study.slope:.3f}")
