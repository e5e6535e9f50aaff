"""Problem definitions shared by the solvers and the simulator.

A :class:`ProblemInstance` is the continuous-time model: ``m`` price classes
arriving as independent Poisson streams, each order carrying a random batch
size, ``W`` units of inventory and a horizon ``T``. :func:`discretize` maps it
onto the period-by-period model used by the dynamic program.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

__all__ = [
    "InvalidInstance",
    "PriceLadder",
    "ArrivalRates",
    "BatchDistribution",
    "ProblemInstance",
    "DiscretizedInstance",
    "validate",
    "require_valid",
    "discretize",
    "default_delta",
    "load_instance",
    "instance_from_dict",
    "batch_from_dict",
]

MASS_TOL = 1e-12


class InvalidInstance(ValueError):
    """Raised when a solver is handed an instance that fails validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _frozen(values, dtype=float):
    arr = np.array(values, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PriceLadder:
    prices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "prices", _frozen(self.prices))

    def __len__(self):
        return len(self.prices)


@dataclass(frozen=True)
class ArrivalRates:
    rates: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rates", _frozen(self.rates))

    def __len__(self):
        return len(self.rates)

    @property
    def cumulative(self) -> np.ndarray:
        """Lambda_l = lambda_1 + ... + lambda_l."""
        return np.cumsum(self.rates)


@dataclass(frozen=True)
class BatchDistribution:
    """Batch-size pmf on 0, 1, ..., len(pmf) - 1.

    Whatever mass is missing from ``pmf`` sits in an overflow bucket: an order
    from that bucket is larger than any inventory level and is never supplied.
    """

    pmf: np.ndarray
    name: str = "pmf"
    mean: float | None = None

    def __post_init__(self):
        pmf = np.array(self.pmf, dtype=float).reshape(-1)
        # trailing zeros carry no information
        nz = np.flatnonzero(pmf)
        pmf = pmf[: nz[-1] + 1] if nz.size else pmf[:1]
        object.__setattr__(self, "pmf", _frozen(pmf))
        if self.mean is None:
            mean = float(np.dot(np.arange(len(pmf)), pmf))
            object.__setattr__(self, "mean", mean)

    @property
    def overflow(self) -> float:
        return max(0.0, 1.0 - float(self.pmf.sum()))

    @property
    def is_unit(self) -> bool:
        return (
            len(self.pmf) == 2
            and abs(self.pmf[1] - 1.0) <= MASS_TOL
            and self.pmf[0] <= MASS_TOL
        )

    def truncated(self, W: int) -> np.ndarray:
        """pmf on sizes 0..W; mass above W is left out (it never fits)."""
        out = np.zeros(W + 1)
        k = min(W + 1, len(self.pmf))
        out[:k] = self.pmf[:k]
        return out

    def violations(self, path="batch"):
        out = []
        if np.any(self.pmf < 0):
            out.append(f"{path}.pmf: negative probability")
        if self.pmf.sum() > 1.0 + MASS_TOL:
            out.append(f"{path}.pmf: total mass {self.pmf.sum():.15g} exceeds 1")
        return out

    # presets -----------------------------------------------------------

    @classmethod
    def unit(cls) -> "BatchDistribution":
        return cls([0.0, 1.0], name="unit", mean=1.0)

    @classmethod
    def negative_binomial(cls, r, p, tail=1e-16) -> "BatchDistribution":
        """P(Q=k) = C(k+r-1, r-1) p^r (1-p)^k for k = 0, 1, 2, ..."""
        dist = stats.nbinom(r, p)
        kmax = int(dist.isf(tail)) + 1
        pmf = dist.pmf(np.arange(kmax + 1))
        return cls(pmf, name=f"negbin({r},{p})", mean=float(dist.mean()))

    @classmethod
    def discretized_exponential(cls, mean, tail=1e-16) -> "BatchDistribution":
        """P(Q=n) = exp(-g n) - exp(-g (n+1)), n = 0, 1, ..., with 1/g = mean.

        ``mean`` is the mean of the underlying exponential; the discretized
        variable has mean exp(-g) / (1 - exp(-g)), slightly below it.
        """
        g = 1.0 / mean
        nmax = int(math.ceil(-math.log(tail) / g))
        n = np.arange(nmax + 1)
        pmf = np.exp(-g * n) - np.exp(-g * (n + 1))
        q_mean = math.exp(-g) / -math.expm1(-g)
        return cls(pmf, name=f"dexp({mean})", mean=q_mean)


@dataclass(frozen=True)
class ProblemInstance:
    """Continuous-time stochastic knapsack.

    ``batches`` is either a single :class:`BatchDistribution` shared by every
    class or a tuple with one distribution per price class.
    """

    ladder: PriceLadder
    rates: ArrivalRates
    W: int
    T: float
    batches: BatchDistribution | tuple = field(default_factory=BatchDistribution.unit)

    def __post_init__(self):
        if not isinstance(self.ladder, PriceLadder):
            object.__setattr__(self, "ladder", PriceLadder(self.ladder))
        if not isinstance(self.rates, ArrivalRates):
            object.__setattr__(self, "rates", ArrivalRates(self.rates))
        if isinstance(self.batches, (list, tuple)):
            object.__setattr__(self, "batches", tuple(self.batches))

    @classmethod
    def build(cls, prices, rates, W, T, batch=None, batches=None):
        if batches is not None:
            b = tuple(batches)
        else:
            b = batch if batch is not None else BatchDistribution.unit()
        return cls(PriceLadder(prices), ArrivalRates(rates), W, T, b)

    @property
    def m(self) -> int:
        return len(self.ladder)

    @property
    def prices(self) -> np.ndarray:
        return self.ladder.prices

    @property
    def lam(self) -> np.ndarray:
        return self.rates.rates

    @property
    def homogeneous(self) -> bool:
        return isinstance(self.batches, BatchDistribution)

    @property
    def is_unit(self) -> bool:
        return all(b.is_unit for b in self.batch_list())

    def batch_list(self):
        if self.homogeneous:
            return [self.batches] * self.m
        return list(self.batches)

    def replace(self, **changes) -> "ProblemInstance":
        kw = dict(ladder=self.ladder, rates=self.rates, W=self.W, T=self.T,
                  batches=self.batches)
        kw.update(changes)
        return ProblemInstance(**kw)


@dataclass(frozen=True)
class DiscretizedInstance:
    """Period model: at most one order per period.

    ``theta[i, j]`` is the probability that the period's order is of class
    ``i`` and size ``j`` for ``j = 0..W``; column ``W + 1`` collects orders
    larger than ``W``. Size-0 and oversize orders occupy the period but can
    never be supplied. ``theta0`` is the probability of no arrival.
    """

    theta: np.ndarray
    theta0: float
    periods: int
    W: int
    prices: np.ndarray
    delta: float = 1.0

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "prices", _frozen(self.prices))

    @property
    def m(self) -> int:
        return self.theta.shape[0]

    @property
    def supplied(self) -> np.ndarray:
        """(m, W + 1) view with only the sizes 1..W that can ever be supplied."""
        out = np.zeros((self.m, self.W + 1))
        out[:, 1:] = self.theta[:, 1 : self.W + 1]
        return out

    @property
    def is_unit(self) -> bool:
        return not np.any(self.theta[:, 2 : self.W + 1] > 0)

    @classmethod
    def from_theta(cls, theta, prices, periods, W=None, delta=1.0):
        """Build from an (m, W) array of probabilities for sizes 1..W."""
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        if W is None:
            W = theta.shape[1]
        full = np.zeros((theta.shape[0], W + 2))
        k = min(W, theta.shape[1])
        full[:, 1 : k + 1] = theta[:, :k]
        # sizes beyond W go to the overflow column
        full[:, W + 1] = theta[:, k:].sum(axis=1)
        theta0 = 1.0 - full.sum()
        return cls(full, theta0, periods, W, prices, delta)

    def violations(self):
        out = []
        if self.theta.ndim != 2 or self.theta.shape[1] != self.W + 2:
            out.append("theta: expected shape (m, W + 2)")
            return out
        if np.any(self.theta < 0):
            out.append("theta: negative probability")
        if self.theta0 < -MASS_TOL:
            out.append(f"theta0: {self.theta0:.3g} < 0")
        if abs(self.theta0 - (1.0 - self.theta.sum())) > MASS_TOL:
            out.append("theta0: does not complement theta")
        if self.periods < 1:
            out.append("periods: must be >= 1")
        if self.W < 0:
            out.append("W: must be >= 0")
        if len(self.prices) != self.m:
            out.append("prices: length differs from theta rows")
        return out


def validate(instance: ProblemInstance) -> list[str]:
    """Every violated invariant of ``instance``; an empty list means ok."""
    out = []
    p = instance.ladder.prices
    lam = instance.rates.rates
    if len(p) < 1:
        out.append("ladder.prices: need at least one price class")
    if np.any(~np.isfinite(p)) or np.any(p <= 0):
        out.append("ladder.prices: all prices must be > 0")
    if np.any(np.diff(p) > 0):
        out.append("ladder.prices: ladder not non-increasing")
    if np.any(~np.isfinite(lam)) or np.any(lam <= 0):
        out.append("rates.rates: all rates must be > 0")
    if len(p) != len(lam):
        out.append(f"rates.rates: length {len(lam)} != ladder length {len(p)}")
    if not isinstance(instance.W, (int, np.integer)) or instance.W < 0:
        out.append("W: must be an integer >= 0")
    if not (np.isfinite(instance.T) and instance.T > 0):
        out.append("T: must be > 0")
    if instance.homogeneous:
        out += instance.batches.violations("batches")
    else:
        if len(instance.batches) != len(p):
            out.append(f"batches: {len(instance.batches)} entries for {len(p)} classes")
        for i, b in enumerate(instance.batches):
            if not isinstance(b, BatchDistribution):
                out.append(f"batches[{i}]: not a BatchDistribution")
            else:
                out += b.violations(f"batches[{i}]")
    return out


def require_valid(instance: ProblemInstance) -> ProblemInstance:
    bad = validate(instance)
    if bad:
        raise InvalidInstance(bad)
    return instance


def default_delta(instance: ProblemInstance, max_load=0.2) -> float:
    """Largest step with delta * sum(lambda) <= max_load that divides T."""
    total = float(instance.lam.sum())
    n = max(1, math.ceil(instance.T * total / max_load - 1e-9))
    return instance.T / n


def discretize(instance: ProblemInstance, delta: float | None = None) -> DiscretizedInstance:
    """Per-period probabilities theta_ij = lambda_i * delta * P(Q_i = j)."""
    require_valid(instance)
    if delta is None:
        delta = default_delta(instance)
    if not delta > 0:
        raise ValueError("delta must be > 0")
    ratio = instance.T / delta
    periods = round(ratio)
    if periods < 1 or abs(ratio - periods) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"T/delta = {ratio!r} is not integral")
    load = delta * float(instance.lam.sum())
    if load > 1.0 + MASS_TOL:
        raise ValueError(f"delta * sum(rates) = {load:.6g} > 1 makes theta0 negative")
    W = int(instance.W)
    theta = np.zeros((instance.m, W + 2))
    for i, b in enumerate(instance.batch_list()):
        q = b.truncated(W)
        theta[i, : W + 1] = q
        theta[i, W + 1] = max(0.0, 1.0 - q.sum())
        theta[i] *= instance.lam[i] * delta
    theta0 = 1.0 - theta.sum()
    if abs(theta0) < MASS_TOL:
        theta0 = 0.0
    return DiscretizedInstance(theta, theta0, periods, W, instance.prices, delta)


# configuration files ------------------------------------------------------

def batch_from_dict(spec) -> BatchDistribution:
    if spec is None:
        return BatchDistribution.unit()
    if isinstance(spec, (list, tuple)):
        return BatchDistribution(spec)
    kind = spec.get("kind", "pmf")
    if kind == "unit":
        return BatchDistribution.unit()
    if kind in ("negbin", "negative_binomial"):
        return BatchDistribution.negative_binomial(spec["r"], spec["p"])
    if kind in ("exponential", "discretized_exponential", "dexp"):
        return BatchDistribution.discretized_exponential(spec["mean"])
    if kind == "pmf":
        return BatchDistribution(spec["pmf"])
    raise ValueError(f"unknown batch kind {kind!r}")


def instance_from_dict(cfg) -> ProblemInstance:
    for key in ("prices", "rates", "W", "T"):
        if key not in cfg:
            raise ValueError(f"config is missing {key!r}")
    W = cfg["W"]
    if isinstance(W, float) and W.is_integer():
        W = int(W)
    if "batches" in cfg:
        batches = tuple(batch_from_dict(b) for b in cfg["batches"])
    else:
        batches = batch_from_dict(cfg.get("batch"))
    return ProblemInstance(PriceLadder(cfg["prices"]), ArrivalRates(cfg["rates"]),
                           W, float(cfg["T"]), batches)


def load_instance(path) -> tuple[ProblemInstance, float | None]:
    """Read a JSON config; returns the instance and the optional ``delta``."""
    cfg = json.loads(Path(path).read_text())
    return instance_from_dict(cfg), cfg.get("delta")
