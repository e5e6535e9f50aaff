"""Exact finite-horizon dynamic program and its structural probes.

Periods are numbered ``n = 1..T_d`` as in the recursion; price classes are
0-based array indices.  Work is O(T_d * W * m * W) and memory O(T_d * W); the
table is meant for T_d up to ~1e4 and W up to ~1e3.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .model import DiscretizedInstance, ProblemInstance, InvalidInstance, require_valid

__all__ = [
    "ValueTable",
    "ThresholdProfile",
    "solve_dp",
    "accept",
    "extract_thresholds",
    "structure_report",
    "write_value_csv",
    "ContinuousValue",
    "solve_continuous",
]


@dataclass(frozen=True)
class ValueTable:
    """``values[n - 1, d]`` is V(n, d); the last row (n = T_d + 1) is zero."""

    values: np.ndarray
    instance: DiscretizedInstance

    @property
    def periods(self) -> int:
        return self.values.shape[0] - 1

    @property
    def W(self) -> int:
        return self.values.shape[1] - 1

    @property
    def optimal_value(self) -> float:
        return float(self.values[0, -1])

    def V(self, n: int, d: int) -> float:
        return float(self.values[n - 1, d])


def solve_dp(instance: DiscretizedInstance) -> ValueTable:
    """Backward recursion

        V(n, d) = V(n+1, d) [theta0 + Theta(d)]
                  + sum_i sum_{j<=d} theta_ij max{p_i j + V(n+1, d-j), V(n+1, d)}

    starting from the all-zero row n = T_d + 1, so that the n = T_d row is the
    supply-everything boundary sum_i sum_{j<=d} theta_ij p_i j.
    """
    bad = instance.violations()
    if bad:
        raise InvalidInstance(bad)
    T_d, W = instance.periods, instance.W
    theta = instance.theta
    p = instance.prices
    # stay[d]: no arrival, size-0 order, or order larger than d
    tail = np.cumsum(theta[:, ::-1].sum(axis=0))[::-1]      # tail[j] = mass of sizes >= j
    stay = np.empty(W + 1)
    stay[:] = instance.theta0 + theta[:, 0].sum()
    stay += tail[1 : W + 2]
    sizes = [j for j in range(1, W + 1) if np.any(theta[:, j] > 0)]

    values = np.zeros((T_d + 1, W + 1))
    for n in range(T_d - 1, -1, -1):
        nxt = values[n + 1]
        cur = nxt * stay
        for j in sizes:
            # d = j..W
            take = p[:, None] * j + nxt[None, : W + 1 - j]
            best = np.maximum(take, nxt[None, j:])
            cur[j:] += theta[:, j] @ best
        values[n] = cur
    values.setflags(write=False)
    return ValueTable(values, instance)


def accept(table: ValueTable, n: int, d: int, i: int, j: int) -> bool:
    """Supply a class-``i`` order of size ``j`` in period ``n`` with ``d`` units?

    Ties accept.
    """
    if not 1 <= n <= table.periods:
        raise ValueError(f"period {n} outside 1..{table.periods}")
    if not 0 <= d <= table.W:
        raise ValueError(f"inventory {d} outside 0..{table.W}")
    if j > d or j <= 0:
        return False
    nxt = table.values[n]
    return bool(table.instance.prices[i] * j + nxt[d - j] >= nxt[d])


@dataclass(frozen=True)
class ThresholdProfile:
    """``t[k, d]``: first period at which class ``k`` is accepted with ``d``
    units on hand (``periods + 1`` when never).  Column d = 0 is never."""

    t: np.ndarray
    violations: tuple


def extract_thresholds(table: ValueTable, instance: DiscretizedInstance | None = None
                       ) -> ThresholdProfile:
    instance = instance or table.instance
    if not instance.is_unit:
        raise ValueError("thresholds are only defined for unit-size orders")
    T_d, W, m = table.periods, table.W, instance.m
    p = instance.prices
    nxt = table.values[1:]                       # V(n+1, .) for n = 1..T_d
    marginal = np.zeros((T_d, W + 1))
    marginal[:, 1:] = nxt[:, 1:] - nxt[:, :-1]
    # acc[k, n-1, d]
    acc = p[:, None, None] + 0.0 >= marginal[None, :, :]
    acc[:, :, 0] = False

    t = np.full((m, W + 1), T_d + 1, dtype=int)
    problems = []
    for k in range(m):
        for d in range(1, W + 1):
            col = acc[k, :, d]
            hits = np.flatnonzero(col)
            if hits.size:
                first = hits[0]
                t[k, d] = first + 1
                if not col[first:].all():
                    problems.append(f"class {k}, d={d}: acceptance set is not an up-set in n")
    for d in range(1, W + 1):
        if np.any(np.diff(t[:, d]) < 0):
            problems.append(f"d={d}: thresholds not ordered in class")
    for k in range(m):
        if np.any(np.diff(t[k, 1:]) > 0):
            problems.append(f"class {k}: threshold increases with inventory")
    return ThresholdProfile(t, tuple(problems))


def structure_report(table: ValueTable) -> dict:
    """Largest violations of concavity in d and submodularity in (n, d).

    Both are expected to be <= 0 (up to round-off) for unit-size orders; for
    batch orders the numbers are informational only.
    """
    V = table.values
    inc = np.diff(V, axis=1)                       # V(n,d) - V(n,d-1)
    concavity = float(np.max(np.diff(inc, axis=1), initial=-np.inf))
    submod = float(np.max(np.diff(inc, axis=0), initial=-np.inf))
    monotone_d = float(np.max(-inc, initial=-np.inf))
    monotone_n = float(np.max(np.diff(V, axis=0), initial=-np.inf))
    return {
        "concavity": concavity,
        "submodularity": submod,
        "decreasing_in_d": monotone_d,
        "increasing_in_n": monotone_n,
        "unit": table.instance.is_unit,
    }


def write_value_csv(table: ValueTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "d", "value"])
        for n in range(1, table.periods + 2):
            for d in range(table.W + 1):
                w.writerow([n, d, repr(float(table.values[n - 1, d]))])


# continuous time -----------------------------------------------------------

@dataclass(frozen=True)
class ContinuousValue:
    """Optimal value of the continuous-time model with ``s`` time units left."""

    s: np.ndarray
    values: np.ndarray           # values[k, d] at s[k]

    @property
    def optimal_value(self) -> float:
        return float(self.values[-1, -1])


def solve_continuous(instance: ProblemInstance, rtol=1e-9, atol=1e-9) -> ContinuousValue:
    """Optimal expected revenue without time discretization.

    With ``s`` time units to go, ``dV/ds(d) = sum_i lambda_i sum_{j<=d} q_ij
    max(p_i j + V(d-j) - V(d), 0)``; the discrete recursion is the explicit
    Euler scheme of this system with step ``delta``.
    """
    require_valid(instance)
    W = int(instance.W)
    m = instance.m
    d = np.arange(W + 1)
    j = np.arange(W + 1)
    lower = j[None, :] <= d[:, None]
    lower[:, 0] = False
    src = np.where(lower, d[:, None] - j[None, :], 0)
    rates = np.zeros((m, W + 1, W + 1))
    for i, b in enumerate(instance.batch_list()):
        q = b.truncated(W)
        rates[i] = np.where(lower, instance.lam[i] * q[None, :], 0.0)
    revenue = instance.prices[:, None, None] * j[None, None, :]
    active = rates > 0

    def rhs(_, V):
        gain = revenue + V[src][None] - V[:, None][None]
        return np.sum(rates * np.maximum(gain, 0.0, where=active, out=np.zeros_like(gain)),
                      axis=(0, 2))

    sol = solve_ivp(rhs, (0.0, float(instance.T)), np.zeros(W + 1), method="DOP853",
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(sol.message)
    return ContinuousValue(sol.t, sol.y.T)
