"""Reference implementations that share no code with the package.

Each one computes the same quantity as a library routine by a different
route: direct summation, exact rational arithmetic, a full decision tree,
dense matrix exponentials or brute-force grids.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
from scipy.linalg import expm


# Poisson ---------------------------------------------------------------------

def shortfall_sum(W, mu):
    """E[W - N(mu)]^+ as sum_{k<W} (W - k) P(N = k), each term from lgamma."""
    if mu == 0:
        return float(W)
    terms = [(W - k) * math.exp(k * math.log(mu) - mu - math.lgamma(k + 1)) for k in range(W)]
    return math.fsum(terms)


def shortfall_vec(W, mu):
    """Vectorized E[W - N(mu)]^+ on an array of means, pmf built term by term."""
    mu = np.asarray(mu, float)
    term = np.exp(-mu)
    total = W * term
    for k in range(1, W):
        term = term * mu / k
        total = total + (W - k) * term
    return total


# switch-over revenue from switch times ----------------------------------------

def switch_revenue(prices, rates, W, T, times):
    """Revenue of admitting class l from times[l-1] on (times sorted, class 1 at 0).

    Units sold while classes 1..l are open are H(mu_{l-1}) - H(mu_l), and
    each such unit earns the rate-weighted price of the open classes.
    """
    p = np.asarray(prices, float)
    lam = np.asarray(rates, float)
    starts = np.concatenate([[0.0], np.asarray(times, float)])
    ends = np.concatenate([starts[1:], [T]])
    Lam = np.cumsum(lam)
    avg = np.cumsum(lam * p) / Lam
    mu = np.cumsum(Lam * (ends - starts))
    H = np.concatenate([[float(W)], shortfall_vec(W, mu)])
    return float(np.sum(avg * (H[:-1] - H[1:])))


def switch_revenue_grid(prices, rates, W, T, grids):
    """Vectorized switch_revenue over an (n, m-1) array of sorted switch times."""
    p = np.asarray(prices, float)
    lam = np.asarray(rates, float)
    g = np.asarray(grids, float)
    n = g.shape[0]
    starts = np.hstack([np.zeros((n, 1)), g])
    ends = np.hstack([g, np.full((n, 1), float(T))])
    Lam = np.cumsum(lam)
    avg = np.cumsum(lam * p) / Lam
    mu = np.cumsum(Lam * (ends - starts), axis=1)
    H = np.hstack([np.full((n, 1), float(W)), shortfall_vec(W, mu)])
    return (avg * (H[:, :-1] - H[:, 1:])).sum(axis=1)


def best_switch_on_grid(prices, rates, W, T, step):
    """Maximum of switch_revenue over all sorted switch-time vectors on a grid."""
    m = len(prices)
    pts = np.round(np.arange(0.0, T + step / 2, step), 12)
    if m == 1:
        return switch_revenue(prices, rates, W, T, [])
    if m == 2:
        return float(switch_revenue_grid(prices, rates, W, T, pts[:, None]).max())
    best = -np.inf
    # fix the first time, enumerate sorted tails
    for i, t1 in enumerate(pts):
        rest = pts[i:]
        if m == 3:
            tails = rest[:, None]
        elif m == 4:
            a, b = np.triu_indices(len(rest))
            tails = np.column_stack([rest[a], rest[b]])
        else:
            tails = np.array(list(itertools.combinations_with_replacement(rest, m - 2)))
        grid = np.hstack([np.full((len(tails), 1), t1), tails])
        best = max(best, float(switch_revenue_grid(prices, rates, W, T, grid).max()))
    return best


# dynamic program ---------------------------------------------------------------

def expectimax(theta, theta0, prices, periods, W):
    """Optimal revenue by walking the whole decision tree in exact arithmetic.

    ``theta[i][j]`` is the probability of a class-i order of size j
    (j = 0..len-1); sizes above the stock are rejected by force.
    """
    def value(n, d):
        if n > periods:
            return Fraction(0)
        stay = value(n + 1, d)
        total = theta0 * stay
        for i, row in enumerate(theta):
            for j, q in enumerate(row):
                if q == 0:
                    continue
                if 1 <= j <= d:
                    total += q * max(prices[i] * j + value(n + 1, d - j), stay)
                else:
                    total += q * stay
        return total

    return value(1, W)


def enumerate_policies(theta, theta0, prices, periods, W):
    """Best revenue over every deterministic Markov policy, each evaluated
    by exact forward propagation of the inventory distribution."""
    decisions = [(n, d, i, j) for n in range(1, periods + 1) for d in range(1, W + 1)
                 for i, row in enumerate(theta) for j in range(1, min(d, len(row) - 1) + 1)
                 if row[j] != 0]
    best = None
    for bits in itertools.product((False, True), repeat=len(decisions)):
        rule = dict(zip(decisions, bits))
        dist = {W: Fraction(1)}
        revenue = Fraction(0)
        for n in range(1, periods + 1):
            nxt = {}
            for d, pr in dist.items():
                nxt[d] = nxt.get(d, 0) + pr * theta0
                for i, row in enumerate(theta):
                    for j, q in enumerate(row):
                        if q == 0:
                            continue
                        if rule.get((n, d, i, j), False):
                            revenue += pr * q * prices[i] * j
                            nxt[d - j] = nxt.get(d - j, 0) + pr * q
                        else:
                            nxt[d] = nxt.get(d, 0) + pr * q
            dist = nxt
        if best is None or revenue > best:
            best = revenue
    return best


# batch kernel --------------------------------------------------------------------

def leftover_expm(pmf, W, mu):
    """z^T e^{-mu} e^{mu M} w with a dense matrix exponential."""
    q = np.zeros(W + 1)
    k = min(W + 1, len(pmf))
    q[:k] = pmf[:k]
    M = np.zeros((W + 1, W + 1))
    for d in range(W + 1):
        for j in range(1, d + 1):
            M[d, d - j] = q[j]
        M[d, d] = 1.0 - q[1 : d + 1].sum()
    E = expm(mu * (M - np.eye(W + 1)))
    return float(E[W] @ np.arange(W + 1))


def leftover_monte_carlo(pmf, W, mu, n, rng):
    """Stock left after Poisson(mu) arrivals that are supplied whenever they fit."""
    pmf = np.asarray(pmf, float)
    cdf = np.cumsum(pmf)
    counts = rng.poisson(mu, size=n)
    out = np.empty(n)
    for r, c in enumerate(counts):
        sizes = np.searchsorted(cdf, rng.random(c), side="right")
        stock = W
        for s in sizes:
            if 1 <= s <= stock:
                stock -= s
        out[r] = stock
    return out
