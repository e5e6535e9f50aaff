"""Markdown pricing on top of the switch-over structure.

The horizon is cut into ``m`` unit-length segments with one price each.  A
price ``p`` draws orders at rate ``gamma(p)``, so after segment ``i`` the
expected number of arrivals is ``mu_i = gamma(p_1) + ... + gamma(p_i)`` and the
revenue is

    p_1 W - sum_i r_i G(mu_i),     r_i = p_i - p_{i+1},  r_m = p_m,

where G is the expected-leftover kernel (H for unit orders).  Optimizing
over the prices is a problem on the simplex {r >= 0, sum r = p_1}.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .model import BatchDistribution
from .poisson import ShortfallKernel, make_rng

__all__ = [
    "DemandFunction",
    "PricingFrame",
    "PricingSolution",
    "demand",
    "prices_from_r",
    "r_from_prices",
    "pricing_objective",
    "pricing_gradient",
    "project_simplex",
    "solve_pricing_exact",
    "solve_pricing_approx",
    "solve_pricing_with_p1",
]

log = logging.getLogger(__name__)

KINDS = ("linear", "exponential", "power")


@dataclass(frozen=True)
class DemandFunction:
    """gamma(p) = a - b p, a e^{-b p} or a / p^b.

    ``modifier`` scales the rate segment by segment (gamma(i, p) =
    modifier[i] * gamma(p)); None means stationary demand.
    """

    kind: str
    a: float
    b: float
    modifier: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown demand kind {self.kind!r}; expected one of {KINDS}")
        if not (self.a > 0 and self.b > 0):
            raise ValueError("demand parameters a and b must be positive")
        if self.modifier is not None:
            mod = tuple(float(x) for x in self.modifier)
            if any(x < 0 or not math.isfinite(x) for x in mod):
                raise ValueError("demand modifier must be finite and >= 0")
            object.__setattr__(self, "modifier", mod)

    def rate(self, p):
        return demand(self, p)[0]

    def slope(self, p):
        return demand(self, p)[1]

    def factors(self, m: int) -> np.ndarray:
        if self.modifier is None:
            return np.ones(m)
        if len(self.modifier) != m:
            raise ValueError(f"demand modifier has {len(self.modifier)} entries, need {m}")
        return np.asarray(self.modifier)


def demand(fn: DemandFunction, p):
    """(rate, derivative, valid) at price(s) ``p``.

    The linear rate is clamped at zero past p = a/b and flagged invalid there
    (derivative 0); the power form needs p > 0.
    """
    p = np.asarray(p, float)
    a, b = fn.a, fn.b
    if fn.kind == "linear":
        raw = a - b * p
        valid = raw >= 0
        rate = np.where(valid, raw, 0.0)
        der = np.where(valid, -b, 0.0)
    elif fn.kind == "exponential":
        rate = a * np.exp(-b * p)
        der = -b * rate
        valid = np.ones_like(p, dtype=bool)
    else:
        if np.any(p <= 0):
            raise ValueError("power demand needs p > 0")
        rate = a * p ** (-b)
        der = -b / p * rate
        valid = np.ones_like(p, dtype=bool)
    if rate.ndim == 0:
        return float(rate), float(der), bool(valid)
    return rate, der, valid


@dataclass(frozen=True)
class PricingFrame:
    """W units, m unit-length segments, list price p1, demand and batch law."""

    W: int
    m: int
    p1: float
    fn: DemandFunction
    batch: BatchDistribution = field(default_factory=BatchDistribution.unit)

    def __post_init__(self):
        if int(self.W) != self.W or self.W < 0:
            raise ValueError("W must be an integer >= 0")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be an integer >= 1")
        if not (self.p1 > 0 and math.isfinite(self.p1)):
            raise ValueError("p1 must be positive")

    def kernel(self):
        return _kernel(self.batch, int(self.W))

    def with_p1(self, p1):
        return replace(self, p1=float(p1))


_KERNELS: dict = {}


def _kernel(batch, W):
    if batch.is_unit:
        return ShortfallKernel(W)
    key = (batch.pmf.tobytes(), W)
    if key not in _KERNELS:
        from .batch import BatchKernel
        _KERNELS[key] = BatchKernel.from_distribution(batch, W)
    return _KERNELS[key]


@dataclass(frozen=True)
class PricingSolution:
    prices: np.ndarray
    r: np.ndarray
    objective: float
    method: str
    kkt_residual: float
    eta: float
    info: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "prices": self.prices.tolist(),
            "r": self.r.tolist(),
            "objective": self.objective,
            "method": self.method,
            "kkt_residual": self.kkt_residual,
            "eta": self.eta,
            "info": self.info,
        }


def prices_from_r(r) -> np.ndarray:
    """p_i = r_i + ... + r_m."""
    return np.cumsum(np.asarray(r, float)[::-1])[::-1]


def r_from_prices(prices) -> np.ndarray:
    p = np.asarray(prices, float)
    return p - np.append(p[1:], 0.0)


def _check_prices(prices):
    p = np.asarray(prices, float)
    if p.ndim != 1 or len(p) == 0:
        raise ValueError("prices must be a non-empty vector")
    if np.any(np.diff(p) > 1e-12) or p[-1] < 0:
        raise ValueError("prices must satisfy p_1 >= ... >= p_m >= 0")
    return p


def _state(frame, prices):
    """mu_i and Gamma'_i for a price vector."""
    c = frame.fn.factors(frame.m)
    rate, der, _ = demand(frame.fn, prices)
    return np.cumsum(c * rate), np.cumsum(c * der)


def _loss(frame, prices, kernel=None):
    kernel = kernel or frame.kernel()
    r = r_from_prices(prices)
    mu, _ = _state(frame, prices)
    G = np.array([kernel.value(float(x)) for x in mu])
    return float(r @ G)


def pricing_objective(frame: PricingFrame, prices) -> float:
    """Revenue p_1 W - sum_i r_i G(mu_i); p_1 is taken from ``prices``."""
    p = _check_prices(prices)
    if len(p) != frame.m:
        raise ValueError(f"expected {frame.m} prices, got {len(p)}")
    return float(p[0] * frame.W - _loss(frame, p))


def pricing_gradient(frame: PricingFrame, r, kernel=None) -> np.ndarray:
    """d/dr_j sum_i r_i G(mu_i) = G(mu_j) + sum_i r_i G'(mu_i) Gamma'_{min(i,j)}."""
    kernel = kernel or frame.kernel()
    r = np.asarray(r, float)
    mu, dGam = _state(frame, prices_from_r(r))
    G = np.empty(len(r))
    dG = np.empty(len(r))
    for i, x in enumerate(mu):
        if isinstance(kernel, ShortfallKernel):
            ev = kernel.value(float(x)), kernel.derivative(float(x))
        else:
            e = kernel.evaluate(float(x))
            ev = e.value, e.derivative
        G[i], dG[i] = ev
    w = r * dG
    # sum_{i>=j} w_i Gamma'_j + sum_{i<j} w_i Gamma'_i
    tail = np.cumsum(w[::-1])[::-1]
    head = np.concatenate([[0.0], np.cumsum(w * dGam)[:-1]])
    return G + dGam * tail + head


def project_simplex(v, s):
    """Euclidean projection onto {x >= 0, sum x = s}."""
    v = np.asarray(v, float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - s
    idx = np.arange(1, len(v) + 1)
    rho = np.flatnonzero(u - css / idx > 0)[-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def _kkt(grad, r, tol=1e-9):
    """(residual, eta): active coordinates share the multiplier eta and the
    inactive ones must have gradient >= eta."""
    active = r > tol * max(1.0, r.sum())
    eta = float(np.mean(grad[active])) if np.any(active) else float(np.min(grad))
    res_act = np.max(np.abs(grad[active] - eta), initial=0.0)
    res_in = np.max(np.maximum(eta - grad[~active], 0.0), initial=0.0)
    return float(max(res_act, res_in)), eta


def _pgd_simplex(f, grad, r0, s, lb, max_iter=500, tol=1e-9):
    """Projected gradient with Armijo backtracking.

    Stops when the projected-gradient residual drops below ``tol`` (relative
    to the gradient scale) or when no step decreases f any more, which is the
    round-off floor of f; the latter counts as converged only if the residual
    is already small.
    """
    proj = lambda v: project_simplex(v - lb, s - lb.sum()) + lb
    r = proj(r0)
    fr = f(r)
    step = s
    for _ in range(max_iter):
        g = grad(r)
        scale = max(1.0, float(np.max(np.abs(g))))
        res = float(np.max(np.abs(r - proj(r - g / scale))))
        if res < tol:
            return r, fr, True
        while True:
            cand = proj(r - step * g)
            fc = f(cand)
            if fc <= fr - 1e-4 / step * np.sum((cand - r) ** 2):
                break
            step *= 0.5
            if step < 1e-16 * s:
                return r, fr, res < 1e-5
        r, fr = cand, fc
        step = min(step * 2.0, 1e3 * s)
    return r, fr, False


def _pack(frame, r, method, kernel, info):
    r = np.maximum(r, 0.0)
    p = prices_from_r(r)
    g = pricing_gradient(frame, r, kernel)
    res, eta = _kkt(g, r)
    obj = float(p[0] * frame.W - _loss(frame, p, kernel))
    return PricingSolution(p, r, obj, method, res, eta, info)


def solve_pricing_exact(frame: PricingFrame, starts: int = 16, seed: int = 0,
                        max_iter: int = 500) -> PricingSolution:
    """Multi-start projected gradient on {r >= 0, sum r = p_1}.

    Starts: equal steps, geometric ladders, a single price throughout, the
    approximation recursion and Dirichlet draws; the best end point wins.
    """
    m, p1 = frame.m, float(frame.p1)
    kernel = frame.kernel()
    if m == 1:
        return _pack(frame, np.array([p1]), "exact", kernel, {"starts": 1, "converged": True})

    f = lambda r: _loss(frame, prices_from_r(r), kernel)
    grad = lambda r: pricing_gradient(frame, r, kernel)

    cands = [np.full(m, p1 / m)]
    for rho in (0.9, 0.7, 0.5):
        cands.append(r_from_prices(p1 * rho ** np.arange(m)))
    flat = np.zeros(m)
    flat[-1] = p1
    cands.append(flat)
    try:
        cands.append(solve_pricing_approx(frame).r)
    except (ValueError, RuntimeError) as exc:
        log.debug("approximation warm start failed: %s", exc)
    rng = make_rng(seed)
    while len(cands) < starts:
        cands.append(rng.dirichlet(np.ones(m)) * p1)

    # power demand blows up at p = 0, so the last price keeps a tiny floor
    lb = np.zeros(m)
    if frame.fn.kind == "power":
        lb[-1] = 1e-6 * p1
    best = None
    for r0 in cands[: max(starts, 1)]:
        r, fr, conv = _pgd_simplex(f, grad, r0, p1, lb, max_iter=max_iter)
        if best is None or fr < best[1]:
            best = (r, fr, conv)
    r, _, conv = best
    if not conv:
        log.warning("exact pricing solver stopped at max_iter")
    return _pack(frame, r, "exact", kernel, {"starts": min(len(cands), max(starts, 1)),
                                             "converged": bool(conv)})


def _recursion(frame, kernel, top, r1, slope="cumulative"):
    """r_2..r_m from r_1 with the list price set to ``top``.

    Returns the full r vector, or None when a derived price leaves the
    demand domain (treated as an overshoot by the caller).
    """
    m = frame.m
    c = frame.fn.factors(m)
    r = np.zeros(m)
    r[0] = r1
    p = top
    rate, _, _ = demand(frame.fn, p)
    mu_prev = c[0] * rate
    dGam = c[0] * demand(frame.fn, p)[1]
    G_prev = kernel.value(mu_prev)
    spent = r1
    for j in range(1, m):
        p = top - spent
        if p <= 0:
            return None
        rate, der, ok = demand(frame.fn, p)
        if not ok or der >= 0:
            return None
        mu = mu_prev + c[j] * rate
        dGam += c[j] * der
        G, dG = kernel.value(mu), kernel.derivative(mu)
        if dG >= 0:
            return None
        r[j] = (G_prev - G) / ((dGam if slope == "cumulative" else c[j] * der) * dG)
        spent += r[j]
        mu_prev, G_prev = mu, G
    return r


def solve_pricing_approx(frame: PricingFrame, C: float = 10.0, C_max: float = 1e4,
                         grid: int = 400, slope: str = "cumulative") -> PricingSolution:
    """Drop the coupling term of the optimality equations, so that

        r_j = [G(mu_{j-1}) - G(mu_j)] / (s_j G'(mu_j)),   j = 2..m,

    depends on r_1..r_{j-1} only; r_1 then comes from a line search on
    r_1 + ... + r_m = p_1.  ``slope="segment"`` takes s_j = gamma'(p_j) as the
    differenced equations suggest; the default ``"cumulative"`` takes
    s_j = gamma'(p_1) + ... + gamma'(p_j), which is what reproduces the
    published approximate ladders (the segment form overshoots p_1 for every
    r_1 >= 0 once inventory is ample, since r_j -> 1/b for exponential demand).  When no root has r_1 >= 0 the list price is
    inflated by C (doubled on each further failure, up to C_max), the
    recursion solved there, and all r divided by C.
    """
    if slope not in ("cumulative", "segment"):
        raise ValueError("slope must be 'cumulative' or 'segment'")
    m, p1 = frame.m, float(frame.p1)
    kernel = frame.kernel()
    if m == 1:
        return _pack(frame, np.array([p1]), "approximate", kernel, {"scale": 1.0})

    scale = 1.0
    tried = []
    while True:
        top = scale * p1
        r1 = _line_search(frame, kernel, top, grid, slope)
        tried.append(scale)
        if r1 is not None:
            break
        scale = C if scale == 1.0 else scale * 2.0
        if scale > C_max:
            raise RuntimeError(f"approximate pricing: no r_1 >= 0 solves sum r = p_1 "
                               f"(scales tried: {tried})")
    r = _recursion(frame, kernel, top, r1, slope) / scale
    return _pack(frame, r, "approximate", kernel, {"scale": scale, "r1_scaled": r1, "slope": slope})


def _line_search(frame, kernel, top, grid, slope):
    """Smallest r_1 in [0, top] where sum r - top changes sign, or None."""
    def excess(x):
        r = _recursion(frame, kernel, top, x, slope)
        return np.inf if r is None else float(r.sum() - top)

    xs = np.linspace(0.0, top, grid + 1)
    prev_x, prev_v = xs[0], excess(xs[0])
    if prev_v == 0.0:
        return 0.0
    if prev_v > 0:
        return None
    for x in xs[1:]:
        v = excess(x)
        if v >= 0:
            if not math.isfinite(v):
                # overshoot by leaving the demand domain: bisect on the sign
                lo, hi = prev_x, x
                for _ in range(200):
                    mid = 0.5 * (lo + hi)
                    vm = excess(mid)
                    if vm < 0:
                        lo = mid
                    else:
                        hi = mid
                        if math.isfinite(vm):
                            return brentq(excess, lo, hi, xtol=1e-14)
                    if hi - lo < 1e-15 * top:
                        return lo
                return lo
            return brentq(excess, prev_x, x, xtol=1e-14)
        prev_x, prev_v = x, v
    return None


def _default_bracket(fn: DemandFunction):
    if fn.kind == "linear":
        return (1e-6 * fn.a / fn.b, fn.a / fn.b)
    if fn.kind == "exponential":
        return (1e-6 / fn.b, 50.0 / fn.b)
    return (1e-3, 1e3)


def solve_pricing_with_p1(frame: PricingFrame, method: str = "approx", bracket=None,
                          scan: int = 40, **kw) -> PricingSolution:
    """List price as a decision variable.

    With p_1 free the budget constraint stays binding and its multiplier must
    equal W; by the envelope argument d revenue / d p_1 = W - eta(p_1), so
    p_1 solves eta(p_1) = W.  The root is located by a log-spaced scan over
    ``bracket`` and refined with brentq; among several roots the one with the
    best revenue is kept.
    """
    solve = {"approx": solve_pricing_approx, "exact": solve_pricing_exact}[method]
    if method == "exact":
        kw.setdefault("starts", 6)
    lo, hi = bracket or _default_bracket(frame.fn)
    W = float(frame.W)
    cache = {}

    def run(p1):
        if p1 not in cache:
            cache[p1] = solve(frame.with_p1(p1), **kw)
        return cache[p1]

    def h(p1):
        return W - _eta_first(frame.with_p1(p1), run(p1))

    xs = np.geomspace(lo, hi, scan)
    vals = []
    for x in xs:
        try:
            vals.append(h(x))
        except (ValueError, RuntimeError):
            vals.append(np.nan)
    vals = np.asarray(vals)
    roots = []
    for i in range(len(xs) - 1):
        a, b = vals[i], vals[i + 1]
        if np.isfinite(a) and np.isfinite(b) and a > 0 >= b:
            roots.append(brentq(h, xs[i], xs[i + 1], xtol=1e-12, rtol=1e-12))
    if not roots:
        report = ", ".join(f"{x:.4g}:{v:.4g}" for x, v in zip(xs[:: max(1, scan // 8)],
                                                             vals[:: max(1, scan // 8)]))
        raise RuntimeError(f"no list price with eta = W in [{lo:.4g}, {hi:.4g}]; "
                           f"W - eta samples {report}")
    best = max((run(x) for x in roots), key=lambda s: s.objective)
    p1 = float(best.prices[0])
    info = dict(best.info, p1_free=True, roots=[float(x) for x in roots])
    return PricingSolution(best.prices, best.r, best.objective, best.method,
                           best.kkt_residual, _eta_first(frame.with_p1(p1), best), info)


def _eta_first(frame, sol):
    """Multiplier of sum r = p_1 read off the first optimality equation.

    For the approximation the first equation is the one the recursion does
    not touch, so it is the natural estimate in both cases.
    """
    g = pricing_gradient(frame, sol.r)
    return float(g[0]) if sol.method == "approximate" else float(sol.eta)
