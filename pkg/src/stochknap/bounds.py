"""Upper bound on the optimal revenue, lower bound on the best switch-over
revenue, and the scaling study of their gap (unit-size orders)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ProblemInstance, require_valid
from .poisson import shortfall
from .switchover import averaged_prices, solve_unit

__all__ = ["BoundPair", "classify", "upper_bound", "lower_bound", "bounds",
           "GapStudy", "gap_study"]


@dataclass(frozen=True)
class BoundPair:
    """``k`` classes are served over the whole horizon and class ``k + 1``
    (1-based) for the last ``t`` time units; ``k = 0`` when scarce and
    ``k = m`` when abundant."""

    upper: float
    lower: float
    k: int
    t: float
    regime: str


def classify(instance: ProblemInstance):
    """(regime, k, t) with Lambda_k T + lambda_{k+1} t = W in the balanced case.

    W = Lambda_k T exactly is assigned t = 0 with marginal class k + 1.
    """
    W, T = instance.W, float(instance.T)
    Lam = np.cumsum(instance.lam)
    if Lam[0] * T > W:
        return "scarce", 0, 0.0
    if Lam[-1] * T <= W:
        return "abundant", instance.m, 0.0
    k = int(np.flatnonzero(Lam * T <= W)[-1]) + 1
    t = (W - Lam[k - 1] * T) / instance.lam[k]
    return "balanced", k, float(t)


def _require_unit(instance):
    require_valid(instance)
    if not instance.is_unit:
        raise ValueError("the bounds are derived for unit-size orders only")


def upper_bound(instance: ProblemInstance) -> BoundPair:
    """Perfect-hindsight bound on the optimal revenue (``lower`` left as nan)."""
    _require_unit(instance)
    regime, k, t = classify(instance)
    p, lam, T, W = instance.prices, instance.lam, float(instance.T), instance.W
    if regime == "scarce":
        ub = p[0] * W
    elif regime == "abundant":
        ub = float(lam @ p) * T
    else:
        ub = float(lam[:k] @ p[:k]) * T + lam[k] * p[k] * t
    return BoundPair(float(ub), float("nan"), k, t, regime)


def lower_bound(instance: ProblemInstance) -> float:
    """Revenue of the switch-over policy that serves the top ``k`` classes
    from time 0 and adds class ``k + 1`` for the last ``t`` time units."""
    _require_unit(instance)
    regime, k, t = classify(instance)
    W, T = instance.W, float(instance.T)
    Lam = np.cumsum(instance.lam)
    p1k = averaged_prices(instance.ladder, instance.rates).p1k
    H = lambda mu: shortfall(W, mu).value
    if regime == "scarce":
        return float(instance.prices[0] * (W - H(float(W))))
    if regime == "abundant":
        return float(p1k[-1] * (W - H(Lam[-1] * T)))
    a, b = p1k[k - 1], p1k[k]
    return float(a * W - (a - b) * H(Lam[k - 1] * (T - t)) - b * H(Lam[k - 1] * T + instance.lam[k] * t))


def bounds(instance: ProblemInstance) -> BoundPair:
    ub = upper_bound(instance)
    return BoundPair(ub.upper, lower_bound(instance), ub.k, ub.t, ub.regime)


@dataclass(frozen=True)
class GapStudy:
    rows: list          # dicts with W, T, upper, lower, switch, rel_gap, abs_gap
    slope: float        # log-log slope of (upper - switch) against W

    def csv_rows(self):
        keys = ["W", "T", "upper", "lower", "switch", "rel_gap"]
        return [keys] + [[r[k] for k in keys] for r in self.rows]


def gap_study(instance: ProblemInstance, scaling) -> GapStudy:
    """Bounds and optimized switch-over revenue along a list of (W, T) pairs."""
    rows = []
    for W, T in scaling:
        inst = instance.replace(W=int(W), T=float(T))
        bp = bounds(inst)
        sw = solve_unit(inst).objective_revenue
        rows.append({
            "W": int(W), "T": float(T), "upper": bp.upper, "lower": bp.lower,
            "switch": sw, "abs_gap": bp.upper - sw, "rel_gap": (bp.upper - sw) / bp.upper,
            "regime": bp.regime,
        })
    Ws = np.array([r["W"] for r in rows], float)
    gaps = np.array([r["abs_gap"] for r in rows])
    ok = gaps > 0
    slope = float(np.polyfit(np.log(Ws[ok]), np.log(gaps[ok]), 1)[0]) if ok.sum() >= 2 else float("nan")
    return GapStudy(rows, slope)
