"""Random batch sizes: the embedded inventory chain and its switch-over programs.

Inventory observed at arrival epochs is a Markov chain on 0..W with a
lower-triangular transition matrix.  With ``mu`` expected arrivals, the
expected leftover is

    G(mu) = z^T e^{-mu} e^{mu M} w = sum_k P(N(mu) = k) z^T M^k w,

evaluated here as a Poisson-weighted sum of vector iterates (uniformization
style); no dense matrix exponential is ever formed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import BatchDistribution, ProblemInstance, require_valid
from .poisson import poisson_pmf_range, poisson_truncation, make_rng
from .switchover import (
    SwitchOverSolution,
    averaged_prices,
    solve_with_kernel,
    solve_unit,
)

__all__ = [
    "TransitionMatrix",
    "transition_matrix",
    "GEval",
    "expected_remaining",
    "BatchKernel",
    "solve_homogeneous",
    "mixture_matrices",
    "objective_price_dependent",
    "project_capped_simplex",
    "solve_price_dependent",
]

log = logging.getLogger(__name__)

EPS = 1e-12


@dataclass(frozen=True)
class TransitionMatrix:
    entries: np.ndarray

    @property
    def W(self) -> int:
        return self.entries.shape[0] - 1


def transition_matrix(batch, W: int) -> TransitionMatrix:
    """Row d: q_j at column d - j for 1 <= j <= d; the rest stays on the diagonal."""
    q = batch.truncated(W) if isinstance(batch, BatchDistribution) else np.asarray(batch, float)
    M = np.zeros((W + 1, W + 1))
    for d in range(W + 1):
        if d:
            M[d, d - np.arange(1, d + 1)] = q[1 : d + 1]
        M[d, d] = 1.0 - q[1 : d + 1].sum()
    M.setflags(write=False)
    return TransitionMatrix(M)


def _entries(M):
    return M.entries if isinstance(M, TransitionMatrix) else np.asarray(M, float)


def _mix(u, A, mu, eps):
    """sum_k P(N(mu) = k) u A^k for a row vector u."""
    if mu == 0:
        return u.copy()
    K = poisson_truncation(mu, eps)
    weights = poisson_pmf_range(K, mu)
    out = weights[0] * u
    v = u
    for k in range(1, K + 1):
        v = v @ A
        out += weights[k] * v
    return out


@dataclass(frozen=True)
class GEval:
    value: float
    derivative: float
    second_derivative: float
    mass: float


def expected_remaining(M, mu: float, start: int | None = None, eps: float = EPS) -> GEval:
    """G(mu), G'(mu) = -z^T e^{-mu}(I - M)e^{mu M} w and G''(mu) from state ``start``."""
    A = _entries(M)
    W = A.shape[0] - 1
    start = W if start is None else start
    K = poisson_truncation(mu, eps) if mu > 0 else 0
    u = np.zeros(W + 1)
    u[start] = 1.0
    w = np.arange(W + 1, dtype=float)
    s = np.empty(K + 3)
    for k in range(K + 3):
        s[k] = u @ w
        u = u @ A
    weights = poisson_pmf_range(K, mu)
    value = float(weights @ s[: K + 1])
    d1 = float(weights @ (s[1 : K + 2] - s[: K + 1]))
    d2 = float(weights @ (s[2 : K + 3] - 2 * s[1 : K + 2] + s[: K + 1]))
    return GEval(value, d1, d2, float(weights.sum()))


class BatchKernel:
    """G for one batch distribution and inventory W.

    The sequence s_k = z^T M^k w (expected stock after k arrivals) is cached
    and extended on demand, so each evaluation costs O(K) once warmed up.
    """

    def __init__(self, M, eps: float = EPS):
        self.A = _entries(M)
        self.W = self.A.shape[0] - 1
        self.eps = eps
        self._w = np.arange(self.W + 1, dtype=float)
        u = np.zeros(self.W + 1)
        u[self.W] = 1.0
        self._u = u
        self._s = [float(u @ self._w)]

    @classmethod
    def from_distribution(cls, batch: BatchDistribution, W: int, eps: float = EPS):
        return cls(transition_matrix(batch, W), eps)

    def _seq(self, n):
        while len(self._s) < n:
            self._u = self._u @ self.A
            self._s.append(float(self._u @ self._w))
        return np.asarray(self._s[:n])

    def evaluate(self, mu: float) -> GEval:
        K = poisson_truncation(mu, self.eps) if mu > 0 else 0
        s = self._seq(K + 3)
        wts = poisson_pmf_range(K, mu)
        return GEval(
            float(wts @ s[: K + 1]),
            float(wts @ (s[1 : K + 2] - s[: K + 1])),
            float(wts @ (s[2 : K + 3] - 2 * s[1 : K + 2] + s[: K + 1])),
            float(wts.sum()),
        )

    def value(self, mu):
        return self.evaluate(mu).value

    def derivative(self, mu):
        return self.evaluate(mu).derivative

    def neg_slope(self, mu):
        return -self.evaluate(mu).derivative

    def neg_slope_at_zero(self):
        s = self._seq(2)
        return float(s[0] - s[1])


def solve_homogeneous(instance: ProblemInstance) -> SwitchOverSolution:
    """Switch-over times when every class shares one batch distribution."""
    require_valid(instance)
    if not instance.homogeneous:
        raise ValueError("price-dependent batches: use solve_price_dependent")
    if instance.is_unit:
        return solve_unit(instance)
    return solve_with_kernel(BatchKernel.from_distribution(instance.batches, instance.W), instance)


def mixture_matrices(instance: ProblemInstance) -> list[np.ndarray]:
    """Gamma_l = sum_{j<=l} (lambda_j / Lambda_l) M_j."""
    W = int(instance.W)
    lam = instance.lam
    Ms = [transition_matrix(b, W).entries for b in instance.batch_list()]
    out = []
    acc = np.zeros((W + 1, W + 1))
    for l in range(instance.m):
        acc = acc + lam[l] * Ms[l]
        out.append(acc / lam[: l + 1].sum())
    return out


def _segment_values(gammas, lam_cum, y, form, eps):
    """G_l(y) for l = 1..m."""
    W = gammas[0].shape[0] - 1
    w = np.arange(W + 1, dtype=float)
    c = lam_cum * np.asarray(y, float)
    out = np.empty(len(gammas))
    if form == "ordered":
        u = np.zeros(W + 1)
        u[W] = 1.0
        for l, G in enumerate(gammas):
            u = _mix(u, G, float(c[l]), eps)
            out[l] = u @ w
    elif form == "exp_sum":
        acc = np.zeros_like(gammas[0])
        for l, G in enumerate(gammas):
            acc = acc + c[l] * G
            mu = float(c[: l + 1].sum())
            u = np.zeros(W + 1)
            u[W] = 1.0
            out[l] = (_mix(u, acc / mu, mu, eps) if mu > 0 else u) @ w
    else:
        raise ValueError(f"unknown form {form!r}")
    return out


def objective_price_dependent(instance: ProblemInstance, y, form="ordered", eps=EPS,
                              _gammas=None) -> float:
    """sum_l pi_l G_l(y).

    ``form="ordered"`` pushes the inventory distribution through each segment
    in turn (segment k applies Gamma_k for a Poisson(Lambda_k y_k) number of
    arrivals).  ``form="exp_sum"`` uses the single exponential of the summed
    generators instead; the two agree whenever the Gamma_k commute.
    """
    y = np.asarray(y, float)
    T = float(instance.T)
    if len(y) != instance.m or np.any(y < -1e-12) or y.sum() > T * (1 + 1e-12) + 1e-12:
        raise ValueError("y must satisfy y >= 0 and sum(y) <= T")
    y = np.maximum(y, 0.0)
    gammas = _gammas if _gammas is not None else mixture_matrices(instance)
    ap = averaged_prices(instance.ladder, instance.rates)
    G = _segment_values(gammas, np.cumsum(instance.lam), y, form, eps)
    return float(ap.pi @ G)


def project_capped_simplex(v, T):
    """Euclidean projection onto {y >= 0, sum(y) <= T}."""
    v = np.asarray(v, float)
    z = np.maximum(v, 0.0)
    if z.sum() <= T:
        return z
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - T
    idx = np.arange(1, len(v) + 1)
    rho = np.flatnonzero(u - css / idx > 0)[-1]
    tau = css[rho] / (rho + 1)
    return np.maximum(v - tau, 0.0)


def _fd_gradient(f, y, T):
    g = np.empty_like(y)
    for k in range(len(y)):
        h = 1e-5 * max(1.0, y[k])
        up = y.copy()
        dn = y.copy()
        up[k] += h
        dn[k] -= h
        # stay inside y >= 0 with a one-sided difference at the boundary
        if dn[k] < 0:
            dn[k] = y[k]
            g[k] = (f(up) - f(dn)) / h
        else:
            g[k] = (f(up) - f(dn)) / (2 * h)
    return g


def _pgd(f, y0, T, max_iter=400, tol=1e-10):
    y = project_capped_simplex(y0, T)
    fy = f(y)
    step = T
    converged = False
    for it in range(max_iter):
        g = _fd_gradient(f, y, T)
        while True:
            cand = project_capped_simplex(y - step * g, T)
            fc = f(cand)
            if fc <= fy - 1e-4 / step * np.sum((cand - y) ** 2) or step < 1e-14:
                break
            step *= 0.5
        move = np.max(np.abs(cand - y))
        if fc < fy:
            y, fy = cand, fc
        if move < tol:
            converged = True
            break
        step = min(step * 2.0, 10 * T)
    g = _fd_gradient(f, y, T)
    resid = float(np.max(np.abs(y - project_capped_simplex(y - g, T))))
    return y, fy, converged, resid, g


def solve_price_dependent(instance: ProblemInstance, starts: int = 8, seed: int = 0,
                          form: str = "ordered", max_iter: int = 400,
                          warm_start=None) -> SwitchOverSolution:
    """Multi-start projected gradient for the price-dependent batch program.

    Gradients are central finite differences; starts are equal spacing, the
    homogeneous warm start (pooled batch distribution), accept-all, accept
    class 1 only and Dirichlet draws.
    """
    require_valid(instance)
    T = float(instance.T)
    m = instance.m
    gammas = mixture_matrices(instance)
    pi = averaged_prices(instance.ladder, instance.rates).pi
    Lam = np.cumsum(instance.lam)

    def f(y):
        # finite-difference probes may step just outside the feasible set
        return float(pi @ _segment_values(gammas, Lam, np.clip(y, 0, None), form, EPS))

    if m == 1:
        y = np.array([T])
        return _pack(instance, y, f(y), np.zeros(1), True, 0.0, 1)

    cands = [np.full(m, T / m)]
    if warm_start is not None:
        cands.insert(0, np.asarray(warm_start, float))
    pooled = _pooled_batch(instance)
    try:
        warm = solve_homogeneous(instance.replace(batches=pooled))
        cands.append(warm.y)
    except Exception as exc:           # warm start is optional
        log.debug("homogeneous warm start failed: %s", exc)
    last = np.zeros(m)
    last[-1] = T
    first = np.zeros(m)
    first[0] = T
    cands += [last, first]
    rng = make_rng(seed)
    while len(cands) < starts:
        cands.append(rng.dirichlet(np.ones(m)) * T)
    cands = cands[: max(starts, 1)]

    best = None
    for y0 in cands:
        y, fy, conv, resid, g = _pgd(f, y0, T, max_iter=max_iter)
        if best is None or fy < best[1]:
            best = (y, fy, conv, resid, g)
    y, fy, conv, resid, g = best
    if not conv:
        log.warning("projected gradient stopped at max_iter; residual %.3g", resid)
    return _pack(instance, y, fy, g, conv, resid, len(cands))


def _pooled_batch(instance):
    lam = instance.lam
    n = max(len(b.pmf) for b in instance.batch_list())
    pmf = np.zeros(n)
    for l, b in zip(lam, instance.batch_list()):
        pmf[: len(b.pmf)] += l * b.pmf
    return BatchDistribution(pmf / lam.sum(), name="pooled")


def _pack(instance, y, fy, grad, converged, resid, nstarts):
    ap = averaged_prices(instance.ladder, instance.rates)
    Lam = np.cumsum(instance.lam)
    mu = np.cumsum(Lam * y)
    pos = y > 1e-9
    # multiplier of sum(y) <= T from the active coordinates
    eta = float(-np.mean(grad[pos])) if np.any(pos) and grad is not None else 0.0
    t = np.concatenate([[0.0], np.cumsum(y)])
    info = {"converged": bool(converged), "first_order_residual": resid, "starts": nstarts}
    return SwitchOverSolution(mu, y, t, eta, np.zeros(instance.m), float(fy),
                              float(ap.p1k[0] * instance.W - fy),
                              float(instance.T - y.sum()), info)
