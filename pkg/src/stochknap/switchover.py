"""Optimal switch-over times for unit-size orders.

A switch-over policy accepts only class 1 on (0, t_1], classes 1-2 on
(t_1, t_2], and so on.  Working with the cumulative means
mu_l = Lambda_1 y_1 + ... + Lambda_l y_l turns the choice of times into the
separable convex program

    min  sum_l pi_l H(mu_l)
    s.t. sum_l (1/Lambda_l - 1/Lambda_{l+1}) mu_l <= T,   0 <= mu_1 <= ... <= mu_m

which is solved by a line search on the multiplier ``eta`` of the time budget.
The solver core only needs a decreasing convex "remaining inventory" kernel,
so the batch module reuses it with G in place of H.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .model import PriceLadder, ArrivalRates, ProblemInstance, require_valid
from .poisson import ShortfallKernel

__all__ = [
    "AveragedPrices",
    "SwitchOverSolution",
    "KKTReport",
    "averaged_prices",
    "budget_coefficients",
    "objective_unit",
    "objective_from_mu",
    "mu_from_y",
    "y_from_mu",
    "solve_unit",
    "solve_with_kernel",
    "kkt_check",
    "acceptance_rates",
    "kernel_for",
    "revenue_for_durations",
]

TOL = 1e-10


@dataclass(frozen=True)
class AveragedPrices:
    p1k: np.ndarray
    pi: np.ndarray


def averaged_prices(ladder, rates) -> AveragedPrices:
    """p_1k = sum_{i<=k} lambda_i p_i / Lambda_k and pi_k = p_1k - p_1,k+1."""
    p = ladder.prices if isinstance(ladder, PriceLadder) else np.asarray(ladder, float)
    lam = rates.rates if isinstance(rates, ArrivalRates) else np.asarray(rates, float)
    p1k = np.cumsum(lam * p) / np.cumsum(lam)
    pi = p1k - np.append(p1k[1:], 0.0)
    # round-off on equal prices can leave tiny negatives
    pi = np.where(np.abs(pi) <= 1e-15 * p1k, 0.0, pi)
    return AveragedPrices(p1k, pi)


def budget_coefficients(rates) -> np.ndarray:
    """a_l = 1/Lambda_l - 1/Lambda_{l+1} with 1/Lambda_{m+1} = 0."""
    lam = rates.rates if isinstance(rates, ArrivalRates) else np.asarray(rates, float)
    inv = 1.0 / np.cumsum(lam)
    return inv - np.append(inv[1:], 0.0)


def mu_from_y(rates, y) -> np.ndarray:
    lam = rates.rates if isinstance(rates, ArrivalRates) else np.asarray(rates, float)
    return np.cumsum(np.cumsum(lam) * np.asarray(y, float))


def y_from_mu(rates, mu) -> np.ndarray:
    lam = rates.rates if isinstance(rates, ArrivalRates) else np.asarray(rates, float)
    return np.diff(np.concatenate([[0.0], mu])) / np.cumsum(lam)


@dataclass(frozen=True)
class SwitchOverSolution:
    mu: np.ndarray
    y: np.ndarray
    t: np.ndarray
    eta: float
    nu: np.ndarray
    objective_min: float
    objective_revenue: float
    slack: float = 0.0
    info: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "mu": self.mu.tolist(),
            "y": self.y.tolist(),
            "t": self.t.tolist(),
            "eta": self.eta,
            "nu": self.nu.tolist(),
            "objective_min": self.objective_min,
            "objective_revenue": self.objective_revenue,
            "slack": self.slack,
            "info": self.info,
        }


def kernel_for(instance: ProblemInstance):
    """H for unit orders, G of the shared batch distribution otherwise."""
    if instance.is_unit:
        return ShortfallKernel(instance.W)
    if not instance.homogeneous:
        raise ValueError("price-dependent batches have no single kernel")
    from .batch import BatchKernel
    return BatchKernel.from_distribution(instance.batches, instance.W)


def objective_from_mu(kernel, pi, p11, W, mu):
    vals = np.array([kernel.value(float(x)) for x in mu])
    obj = float(np.dot(pi, vals))
    return obj, float(p11 * W - obj)


def objective_unit(instance: ProblemInstance, mu):
    """(sum_l pi_l H(mu_l), p_11 W - that sum)."""
    mu = np.asarray(mu, float)
    if len(mu) != instance.m:
        raise ValueError("mu has the wrong length")
    if mu[0] < 0 or np.any(np.diff(mu) < 0):
        raise ValueError("mu must satisfy 0 <= mu_1 <= ... <= mu_m")
    ap = averaged_prices(instance.ladder, instance.rates)
    return objective_from_mu(ShortfallKernel(instance.W), ap.pi, ap.p1k[0], instance.W, mu)


def revenue_for_durations(instance: ProblemInstance, y, kernel=None) -> float:
    """Expected revenue of the switch-over policy with segment lengths ``y``
    (class l joins after y_1 + ... + y_{l-1}); y = (0, ..., 0, T) is FCFS."""
    y = np.asarray(y, float)
    if len(y) != instance.m or np.any(y < 0):
        raise ValueError("y must be m nonnegative durations")
    kernel = kernel or kernel_for(instance)
    ap = averaged_prices(instance.ladder, instance.rates)
    return objective_from_mu(kernel, ap.pi, ap.p1k[0], instance.W, mu_from_y(instance.rates, y))[1]


def _invert(kernel, target, hint=1.0):
    """mu with kernel.neg_slope(mu) = target (neg_slope decreasing in mu)."""
    hi = max(hint, 1.0)
    while kernel.neg_slope(hi) > target:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("could not bracket the stationarity equation")
    return brentq(lambda x: kernel.neg_slope(x) - target, 0.0, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps)


def _multipliers(kernel, pi, a, mu, eta):
    """nu_l for the ordering constraints: zero past the leading block of
    zero means, filled backwards through it."""
    m = len(mu)
    nu = np.zeros(m + 1)
    k = 0
    while k < m and mu[k] <= 0.0:
        k += 1
    g0 = kernel.neg_slope_at_zero()
    for j in range(k - 1, -1, -1):
        nu[j] = nu[j + 1] + eta * a[j] - pi[j] * g0
    return nu[:m]


def _bisect_eta(means, a, T, eta_max, tol=1e-15, max_iter=400):
    """Bisection on eta until the time budget binds.

    Where the kernel slope is flat to machine precision a mean can jump over
    an eta interval too narrow to resolve; the two bracketing solutions are
    then blended so that the budget holds with equality (the objective is
    linear across such a jump, so the blend stays optimal).
    """
    lo, hi = 0.0, eta_max
    mu_hi = means(hi)
    b_hi = float(a @ mu_hi) - T          # < 0: all means are zero at eta_max
    mu_lo, b_lo = None, np.inf
    probe = eta_max / 2.0
    while True:
        mu_p = means(probe)
        b_p = float(a @ mu_p) - T
        if b_p >= 0:
            lo, mu_lo, b_lo = probe, mu_p, b_p
            break
        hi, mu_hi, b_hi = probe, mu_p, b_p
        probe /= 2.0
        if probe < 1e-300:
            raise RuntimeError("eta search failed to find a violated budget")
    for _ in range(max_iter):
        if hi - lo <= tol * eta_max or b_lo == 0.0:
            break
        mid = 0.5 * (lo + hi)
        mu_m = means(mid)
        b_m = float(a @ mu_m) - T
        if b_m >= 0:
            lo, mu_lo, b_lo = mid, mu_m, b_m
        else:
            hi, mu_hi, b_hi = mid, mu_m, b_m
    theta = b_lo / (b_lo - b_hi) if b_lo > 0 else 0.0
    mu = (1.0 - theta) * mu_lo + theta * mu_hi
    eta = lo if theta <= 0.5 else hi
    return eta, np.maximum.accumulate(mu)


def solve_with_kernel(kernel, instance: ProblemInstance) -> SwitchOverSolution:
    """The eta line search of the switch-over program for any kernel with
    ``value``, ``neg_slope`` (decreasing, >= 0) and ``neg_slope_at_zero``."""
    T = float(instance.T)
    W = int(instance.W)
    m = instance.m
    ap = averaged_prices(instance.ladder, instance.rates)
    a_full = budget_coefficients(instance.rates)
    Lam = np.cumsum(instance.lam)

    # classes with pi_l = 0 do not enter the objective: they keep mu_l at
    # mu_{l-1} (y_l = 0) and the remaining ones are solved alone
    keep = np.flatnonzero(ap.pi > 0)
    pi, a = ap.pi[keep], a_full[keep]
    g0 = kernel.neg_slope_at_zero()

    def means(eta):
        out = np.zeros(len(keep))
        for s in range(len(keep)):
            target = eta * a[s] / pi[s]
            if target >= g0:
                out[s] = 0.0
            else:
                out[s] = _invert(kernel, target, hint=out[s - 1] if s else 1.0)
        return out

    info = {"merged_classes": [int(i) for i in np.flatnonzero(ap.pi <= 0)]}
    if W == 0 or g0 <= 0:
        # nothing to sell: any policy is optimal; accept everything
        mu_k = np.zeros(len(keep))
        mu_k[-1] = Lam[-1] * T
        eta = 0.0
    else:
        eta_max = float(np.max(pi * g0 / a))
        eta, mu_k = _bisect_eta(means, a, T, eta_max)
    mu = np.zeros(m)
    cur = 0.0
    pos = 0
    for idx in range(m):
        if pos < len(keep) and keep[pos] == idx:
            cur = mu_k[pos]
            pos += 1
        mu[idx] = cur
    mu = np.maximum.accumulate(mu)
    y = np.maximum(np.diff(np.concatenate([[0.0], mu])) / Lam, 0.0)
    t = np.concatenate([[0.0], np.cumsum(y)])
    t[-1] = T if abs(t[-1] - T) < 1e-8 * max(1.0, T) else t[-1]
    nu = _multipliers(kernel, ap.pi, a_full, mu, eta)
    obj, rev = objective_from_mu(kernel, ap.pi, ap.p1k[0], W, mu)
    slack = T - float(np.dot(a_full, mu))
    return SwitchOverSolution(mu, y, t, float(eta), nu, obj, rev, slack, info)


def solve_unit(instance: ProblemInstance) -> SwitchOverSolution:
    """Optimal switch-over policy for unit-size orders."""
    require_valid(instance)
    if not instance.is_unit:
        raise ValueError("solve_unit needs unit-size orders; see batch.solve_homogeneous")
    return solve_with_kernel(ShortfallKernel(instance.W), instance)


@dataclass(frozen=True)
class KKTReport:
    stationarity: float
    complementarity_budget: float
    complementarity_order: float
    primal: float
    dual: float
    slack: float

    @property
    def max_residual(self) -> float:
        return max(self.stationarity, self.complementarity_budget,
                   self.complementarity_order, self.primal, self.dual)


def kkt_check(instance: ProblemInstance, solution: SwitchOverSolution, kernel=None) -> KKTReport:
    """Residuals of the optimality system for a candidate (mu, eta, nu).

    stationarity   pi_l g(mu_l) - eta a_l + nu_l - nu_{l+1}
    budget         eta * (sum a_l mu_l - T)
    order          nu_l (mu_l - mu_{l-1})
    primal         violation of the budget and of 0 <= mu_1 <= ... <= mu_m
    dual           negativity of eta and nu
    where g = -H' (or -G' for batches).
    """
    kernel = kernel or kernel_for(instance)
    ap = averaged_prices(instance.ladder, instance.rates)
    a = budget_coefficients(instance.rates)
    mu = np.asarray(solution.mu, float)
    nu = np.append(np.asarray(solution.nu, float), 0.0)
    eta = float(solution.eta)
    g = np.array([kernel.neg_slope(float(x)) for x in mu])
    stat = ap.pi * g - eta * a + nu[:-1] - nu[1:]
    used = float(np.dot(a, mu))
    T = float(instance.T)
    prev = np.concatenate([[0.0], mu[:-1]])
    primal = max(0.0, used - T, float(np.max(prev - mu)))
    dual = max(0.0, -eta, float(np.max(-nu)))
    return KKTReport(
        stationarity=float(np.max(np.abs(stat))),
        complementarity_budget=abs(eta * (used - T)),
        complementarity_order=float(np.max(np.abs(nu[:-1] * (mu - prev)))),
        primal=primal,
        dual=dual,
        slack=T - used,
    )


def acceptance_rates(instance: ProblemInstance, solution: SwitchOverSolution, kernel=None,
                     batch_mean=None) -> np.ndarray:
    """alpha_k: expected units supplied to class k over expected units it asks for.

    Units consumed on segment l are G(mu_{l-1}) - G(mu_l), of which class k
    (k <= l) gets the share lambda_k / Lambda_l.
    """
    kernel = kernel or kernel_for(instance)
    lam = instance.lam
    Lam = np.cumsum(lam)
    mu = np.concatenate([[0.0], solution.mu])
    G = np.array([kernel.value(float(x)) for x in mu])
    used = G[:-1] - G[1:]
    if batch_mean is None:
        batch_mean = 1.0 if instance.is_unit else instance.batches.mean
    alpha = np.empty(instance.m)
    for k in range(instance.m):
        units = float(np.sum(used[k:] * lam[k] / Lam[k:]))
        alpha[k] = units / (lam[k] * instance.T * batch_mean)
    return alpha
