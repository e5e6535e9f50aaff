"""Monte Carlo evaluation of admission policies in continuous time.

Replications are processed in fixed-size blocks.  Every block draws its own
event list from a Philox stream keyed by (seed, block index), so results do
not depend on how many workers run the blocks, and policies compared on the
same seed see identical arrivals (common random numbers).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dp import ValueTable
from .model import ProblemInstance, require_valid
from .poisson import make_rng

__all__ = [
    "SwitchOver",
    "FCFS",
    "EqualSpaced",
    "DPTable",
    "SimEstimate",
    "EventBlock",
    "draw_events",
    "run_policy",
    "simulate",
    "compare_policies",
    "Comparison",
]

BLOCK = 4096
Z99 = 2.576


# policies ------------------------------------------------------------------

@dataclass(frozen=True)
class SwitchOver:
    """Class k (0-based) is admitted from time ``starts[k]`` on."""

    starts: tuple
    name: str = "switch"

    def __post_init__(self):
        s = tuple(float(x) for x in self.starts)
        if any(b < a for a, b in zip(s, s[1:])) or (s and s[0] < 0):
            raise ValueError("switch-over times must be sorted and >= 0")
        object.__setattr__(self, "starts", s)

    @classmethod
    def from_solution(cls, solution, name="switch"):
        return cls(tuple(solution.t[:-1]), name)

    def admit(self, time, cls_idx, size, stock, prices):
        return np.asarray(self.starts)[cls_idx] <= time


@dataclass(frozen=True)
class FCFS:
    name: str = "fcfs"

    def admit(self, time, cls_idx, size, stock, prices):
        return np.ones(len(time), dtype=bool)


@dataclass(frozen=True)
class EqualSpaced:
    """Switch-over with the horizon cut into m equal segments."""

    m: int
    T: float
    name: str = "equal"

    def admit(self, time, cls_idx, size, stock, prices):
        return cls_idx * (self.T / self.m) <= time


@dataclass(frozen=True)
class DPTable:
    """Accept when p_i j + V(n+1, d-j) >= V(n+1, d) on the clock of step ``delta``."""

    table: ValueTable
    delta: float
    name: str = "dp"

    def admit(self, time, cls_idx, size, stock, prices):
        V = self.table.values
        n = np.clip(np.floor(time / self.delta).astype(int) + 1, 1, self.table.periods)
        d = np.minimum(stock, self.table.W)
        j = np.minimum(size, d)
        nxt = V[n]                                # row n+1 (1-based) of V
        rows = np.arange(len(n))
        return prices[cls_idx] * j + nxt[rows, d - j] >= nxt[rows, d]


def _policy_for(instance, spec):
    if isinstance(spec, str):
        if spec == "fcfs":
            return FCFS()
        if spec == "equal":
            return EqualSpaced(instance.m, float(instance.T))
        raise ValueError(f"unknown policy name {spec!r}")
    return spec


# events --------------------------------------------------------------------

@dataclass(frozen=True)
class EventBlock:
    """Padded event lists for ``n`` replications; ``count[r]`` events are real."""

    time: np.ndarray          # (n, K), +inf padding
    cls: np.ndarray           # (n, K)
    size: np.ndarray          # (n, K)
    count: np.ndarray         # (n,)


def draw_events(instance: ProblemInstance, n: int, rng: np.random.Generator) -> EventBlock:
    """Merged Poisson streams on [0, T] with class labels and batch sizes."""
    lam = instance.lam
    T = float(instance.T)
    count = rng.poisson(lam.sum() * T, size=n)
    K = int(count.max(initial=0))
    time = rng.uniform(0.0, T, size=(n, K))
    mask = np.arange(K)[None, :] < count[:, None]
    time = np.where(mask, time, np.inf)
    time.sort(axis=1)
    cls = rng.choice(instance.m, size=(n, K), p=lam / lam.sum())
    size = np.ones((n, K), dtype=np.int64)
    u = rng.random((n, K))
    for i, b in enumerate(instance.batch_list()):
        if b.is_unit:
            continue
        cdf = np.cumsum(b.pmf)
        sel = cls == i
        draw = np.searchsorted(cdf, u[sel], side="right")
        # the overflow bucket: larger than any stock level
        draw[draw >= len(cdf)] = max(len(cdf), int(instance.W) + 1)
        size[sel] = draw
    return EventBlock(time, cls, size, count)


def run_policy(instance: ProblemInstance, policy, events: EventBlock):
    """(revenue per replication, units supplied per class, units requested per class)."""
    prices = instance.prices
    n, K = events.time.shape
    stock = np.full(n, int(instance.W), dtype=np.int64)
    revenue = np.zeros(n)
    supplied = np.zeros(instance.m)
    requested = np.zeros(instance.m)
    for k in range(K):
        live = np.flatnonzero(k < events.count)
        if live.size == 0:
            break
        t = events.time[live, k]
        c = events.cls[live, k]
        q = events.size[live, k]
        requested += np.bincount(c, weights=q, minlength=instance.m)
        fits = (q >= 1) & (q <= stock[live])
        ok = fits & policy.admit(t, c, q, stock[live], prices)
        idx = live[ok]
        stock[idx] -= q[ok]
        revenue[idx] += prices[c[ok]] * q[ok]
        supplied += np.bincount(c[ok], weights=q[ok], minlength=instance.m)
    return revenue, supplied, requested


# estimates -----------------------------------------------------------------

@dataclass(frozen=True)
class SimEstimate:
    mean: float
    half_width: float
    replications: int
    per_class_acceptance: np.ndarray
    seed: int
    std: float = float("nan")

    def to_dict(self):
        return {
            "mean": self.mean,
            "half_width": self.half_width,
            "replications": self.replications,
            "per_class_acceptance": self.per_class_acceptance.tolist(),
            "seed": self.seed,
            "std": self.std,
        }


def _blocks(replications):
    full, rest = divmod(replications, BLOCK)
    return [BLOCK] * full + ([rest] if rest else [])


def _run_blocks(instance, policies, replications, seed, jobs):
    sizes = _blocks(replications)

    def work(b):
        ev = draw_events(instance, sizes[b], make_rng(seed, b))
        return [run_policy(instance, p, ev) for p in policies]

    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(work, range(len(sizes))))
    else:
        out = [work(b) for b in range(len(sizes))]
    results = []
    for pi in range(len(policies)):
        rev = np.concatenate([o[pi][0] for o in out])
        sup = np.sum([o[pi][1] for o in out], axis=0)
        req = np.sum([o[pi][2] for o in out], axis=0)
        results.append((rev, sup, req))
    return results


def _estimate(rev, sup, req, seed):
    n = len(rev)
    sd = float(np.std(rev, ddof=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        alpha = np.where(req > 0, sup / req, np.nan)
    return SimEstimate(float(np.mean(rev)), Z99 * sd / math.sqrt(n), n, alpha, int(seed), sd)


def simulate(instance: ProblemInstance, policy, replications: int = 10_000, seed: int = 0,
             jobs: int = 1) -> SimEstimate:
    """Mean revenue of ``policy`` with a 99% confidence half-width."""
    require_valid(instance)
    if replications < 2:
        raise ValueError("need at least 2 replications")
    policy = _policy_for(instance, policy)
    rev, sup, req = _run_blocks(instance, [policy], replications, seed, jobs)[0]
    return _estimate(rev, sup, req, seed)


@dataclass(frozen=True)
class Comparison:
    names: list
    estimates: list
    differences: dict = field(default_factory=dict)     # (a, b) -> (mean, half_width)

    @property
    def best(self) -> float:
        return max(e.mean for e in self.estimates)

    def rows(self, W=None, T=None):
        best = self.best
        return [{"policy": n, "W": W, "T": T, "mean": e.mean, "ci99": e.half_width,
                 "pct_off_best": 100.0 * (best - e.mean) / best if best else 0.0}
                for n, e in zip(self.names, self.estimates)]


def compare_policies(instance: ProblemInstance, policies, replications: int = 10_000,
                     seed: int = 0, jobs: int = 1) -> Comparison:
    """Evaluate every policy on the same sampled arrivals.

    Pairwise differences come with their own 99% half-widths; under common
    random numbers they are much tighter than the separate intervals.
    """
    require_valid(instance)
    if replications < 2:
        raise ValueError("need at least 2 replications")
    policies = [_policy_for(instance, p) for p in policies]
    names = [getattr(p, "name", type(p).__name__) for p in policies]
    if len(set(names)) != len(names):
        raise ValueError(f"policy names must be distinct: {names}")
    res = _run_blocks(instance, policies, replications, seed, jobs)
    ests = [_estimate(*r, seed) for r in res]
    diffs = {}
    for a in range(len(policies)):
        for b in range(a + 1, len(policies)):
            d = res[a][0] - res[b][0]
            diffs[(names[a], names[b])] = (float(np.mean(d)),
                                           Z99 * float(np.std(d, ddof=1)) / math.sqrt(len(d)))
    return Comparison(names, ests, diffs)
