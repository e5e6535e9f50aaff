"""
Markdown pricing
================

Price the stock in m equal segments with non-increasing prices.  The exact
solver runs projected gradient on the price gaps; the approximate solver
solves a one-dimensional recursion.
"""
from stochknap.pricing import DemandFunction, PricingFrame, solve_pricing_approx, solve_pricing_exact

for kind, a, b in (("linear", 40, 37.33), ("exponential", 40, 2), ("power", 5.33, 1.5)):
    frame = PricingFrame(40, 3, 1.0, DemandFunction(kind, a, b))
    exact, approx = solve_pricing_exact(frame), solve_pricing_approx(frame)
    print(f"{kind:>11}: exact {exact.objective:.3f} at {exact.prices.round(3)}, "
          f"approx {approx.objective:.3f} at {approx.prices.round(3)}")

# with less stock the early segments keep the list price longer
for W in (10, 20, 50):
    sol = solve_pricing_exact(PricingFrame(W, 8, 1.0, DemandFunction("exponential", 15, 2)), starts=6)
    print(f"W={W:>2}: revenue {sol.objective:.2f}, prices {sol.prices.round(2)}")
