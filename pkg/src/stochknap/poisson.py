"""Poisson kernels: pmf/cdf, the expected-shortfall function and sampling.

``shortfall(W, mu)`` is E[W - N(mu)]^+ for a Poisson count N(mu): the expected
inventory left unsold when ``mu`` orders are expected to be accepted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "poisson_pmf_range",
    "poisson_cdf",
    "ShortfallEval",
    "shortfall",
    "ShortfallKernel",
    "shortfall_asymptotic_ratio",
    "poisson_truncation",
    "sample_poisson",
    "make_rng",
]

# e^{-700} is still a normal double; past that the recurrence underflows
_LOG_SPACE_ABOVE = 700.0


def _check(n, mu):
    if n < 0 or mu < 0 or not math.isfinite(mu):
        raise ValueError(f"need n >= 0 and finite mu >= 0, got n={n}, mu={mu}")


def poisson_pmf_range(kmax: int, mu: float) -> np.ndarray:
    """P(N(mu) = k) for k = 0..kmax."""
    _check(kmax, mu)
    k = np.arange(kmax + 1)
    if mu == 0.0:
        out = np.zeros(kmax + 1)
        out[0] = 1.0
        return out
    if mu > _LOG_SPACE_ABOVE:
        return np.exp(k * math.log(mu) - mu - gammaln(k + 1.0))
    ratios = np.empty(kmax + 1)
    ratios[0] = math.exp(-mu)
    ratios[1:] = mu / k[1:]
    return np.cumprod(ratios)


def poisson_cdf(n: int, mu: float) -> float:
    """F_n(mu) = P(N(mu) <= n); sums nonnegative terms, no cancellation."""
    if n < 0:
        if n == -1:
            return 0.0
        raise ValueError("n must be >= -1")
    _check(n, mu)
    return min(1.0, float(poisson_pmf_range(n, mu).sum()))


@dataclass(frozen=True)
class ShortfallEval:
    value: float
    derivative: float
    second_derivative: float


def shortfall(W: int, mu: float) -> ShortfallEval:
    """H(mu) = E[W - N(mu)]^+ = W F_W(mu) - mu F_{W-1}(mu), with H' and H''.

    H'(mu) = -F_{W-1}(mu) and H''(mu) = P(N(mu) = W - 1).
    """
    _check(W, mu)
    if W == 0:
        return ShortfallEval(0.0, 0.0, 0.0)
    f = poisson_pmf_range(W, mu)
    F = np.cumsum(f)
    F_W = min(1.0, F[W])
    F_Wm1 = min(1.0, F[W - 1])
    value = W * F_W - mu * F_Wm1
    return ShortfallEval(max(0.0, min(float(W), value)), -F_Wm1, float(f[W - 1]))


class ShortfallKernel:
    """H for a fixed inventory ``W``, in the calling form the switch-over
    solvers expect (value, slope, and the mean at which the slope is hit)."""

    def __init__(self, W: int):
        self.W = int(W)

    def value(self, mu):
        return shortfall(self.W, mu).value

    def derivative(self, mu):
        return shortfall(self.W, mu).derivative

    def neg_slope(self, mu):
        """-H'(mu) = F_{W-1}(mu), decreasing from 1 to 0."""
        return poisson_cdf(self.W - 1, mu)

    def neg_slope_at_zero(self):
        return 1.0 if self.W >= 1 else 0.0


def shortfall_asymptotic_ratio(a: float) -> float:
    """E[a - N(a)]^+ / sqrt(a / 2 pi); tends to 1 as a grows."""
    if a <= 0 or int(a) != a:
        raise ValueError("a must be a positive integer")
    return shortfall(int(a), float(a)).value / math.sqrt(a / (2 * math.pi))


def poisson_truncation(mu: float, eps: float = 1e-12) -> int:
    """Smallest K with P(N(mu) > K) < eps."""
    if mu == 0:
        return 0
    kmax = int(mu + 40.0 * math.sqrt(mu) + 60)
    f = poisson_pmf_range(kmax, mu)
    # upper[k] = P(k < N <= kmax); the mass beyond kmax is far below eps
    upper = np.concatenate([np.cumsum(f[::-1])[::-1][1:], [0.0]])
    return int(np.flatnonzero(upper < eps)[0])


def make_rng(seed, *stream) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``seed`` and stream ids."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


def sample_poisson(mu, rng: np.random.Generator, size=None):
    """Poisson(mu) variates; numpy uses inversion for small mu and PTRS
    rejection for mu >= 10."""
    if np.any(np.asarray(mu) < 0):
        raise ValueError("mu must be >= 0")
    out = rng.poisson(mu, size=size)
    return int(out) if size is None and np.ndim(out) == 0 else out
