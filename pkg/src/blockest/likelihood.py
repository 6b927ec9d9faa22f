"""Naive and rank-constrained maximum likelihood estimates of B given labels.

With the labels known, the adjacency likelihood factors into independent
binomials, one per unordered block pair, so every estimator here works from
:class:`SufficientStats`. Binomial coefficients are dropped from the
log-likelihood.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import xlogy

from ._validation import block_indicators, check_adjacency, check_labels, check_rho
from .asymptotics import rank1_jacobian, rank2_block_matrix, rank2_jacobian, vech
from .exceptions import BoundaryWarning, EmptyBlockPair, InfeasibleInit

EPS = 1e-6
ANGLE_MAX = np.pi / 2


@dataclass(frozen=True)
class SufficientStats:
    """Edge counts ``m`` and pair counts ``n_pairs`` per block pair.

    Both are stored as symmetric K x K matrices; within-block counts include
    the n_k self-loop pairs, so n_pairs_kk = n_k (n_k + 1) / 2.
    """

    m: np.ndarray
    n_pairs: np.ndarray

    @property
    def K(self) -> int:
        return self.m.shape[0]

    @classmethod
    def from_expectation(cls, B, block_sizes, rho: float = 1.0) -> "SufficientStats":
        """Population statistics m = n_pairs * rho * B (non-integer counts)."""
        n_pairs = pair_counts(block_sizes)
        return cls(m=n_pairs * rho * np.asarray(B, dtype=np.float64), n_pairs=n_pairs)


def pair_counts(block_sizes) -> np.ndarray:
    nk = np.asarray(block_sizes, dtype=np.float64)
    N = np.outer(nk, nk)
    N[np.diag_indices_from(N)] = nk * (nk + 1) / 2
    return N


def binomial_counts(A, tau, n_blocks: int | None = None, check_input: bool = True) -> SufficientStats:
    """Count edges within and between blocks, each unordered pair once."""
    if check_input:
        A = check_adjacency(A)
    tau = check_labels(tau, n=A.shape[0], n_blocks=n_blocks)
    K = n_blocks if n_blocks is not None else int(tau.max()) + 1
    S = block_indicators(tau, K)
    M = S.T @ A @ S
    loops = np.bincount(tau, weights=np.diag(A), minlength=K)
    M[np.diag_indices(K)] = (np.diag(M) + loops) / 2
    return SufficientStats(m=M, n_pairs=pair_counts(np.bincount(tau, minlength=K)))


def naive_mle(stats: SufficientStats, rho: float = 1.0) -> np.ndarray:
    """B_hat^(N)_kl = m_kl / (rho n_pairs_kl), unclamped."""
    rho = check_rho(rho)
    if np.any(stats.n_pairs <= 0):
        raise EmptyBlockPair("a block pair has no vertex pairs")
    return stats.m / (rho * stats.n_pairs)


def binomial_loglik(b, m, n_pairs, rho: float = 1.0) -> float:
    """sum m log(rho b) + (N - m) log(1 - rho b) over the given entries."""
    b = np.asarray(b, dtype=np.float64)
    return float(np.sum(xlogy(m, rho * b) + xlogy(n_pairs - m, 1 - rho * b)))


def binomial_score(b, m, n_pairs, rho: float = 1.0) -> np.ndarray:
    """Derivative of :func:`binomial_loglik` with respect to each b."""
    b = np.asarray(b, dtype=np.float64)
    return m / b - (n_pairs - m) * rho / (1 - rho * b)


# --- parametrized families -------------------------------------------------


def rank1_block_matrix(p, q) -> np.ndarray:
    return np.array([[p * p, p * q], [p * q, q * q]])


@dataclass(frozen=True)
class Family:
    name: str
    K: int
    param_names: tuple
    lower: np.ndarray
    upper: np.ndarray

    def block_matrix(self, params) -> np.ndarray:
        if self.name == "rank1_2block":
            return rank1_block_matrix(*params)
        return rank2_block_matrix(*params)

    def jacobian(self, params) -> np.ndarray:
        if self.name == "rank1_2block":
            return rank1_jacobian(*params)
        return rank2_jacobian(*params)

    def loglik(self, params, stats: SufficientStats, rho: float = 1.0) -> float:
        b = vech(self.block_matrix(params))
        return binomial_loglik(b, vech(stats.m), vech(stats.n_pairs), rho)

    def gradient(self, params, stats: SufficientStats, rho: float = 1.0) -> np.ndarray:
        b = vech(self.block_matrix(params))
        score = binomial_score(b, vech(stats.m), vech(stats.n_pairs), rho)
        return self.jacobian(params).T @ score

    def init_from(self, B_hat) -> np.ndarray:
        """Starting point read off an estimate of B, clipped into the box."""
        B_hat = np.asarray(B_hat, dtype=np.float64)
        r = np.sqrt(np.clip(np.diag(B_hat), EPS, None))
        if self.name == "rank1_2block":
            x = r
        else:
            def angle(k, l):
                return np.arccos(np.clip(B_hat[k, l] / (r[k] * r[l]), -1.0, 1.0))
            x = np.r_[r, angle(0, 1), angle(0, 2)]
        return np.clip(x, self.lower, self.upper)


FAMILIES = {
    "rank1_2block": Family("rank1_2block", 2, ("p", "q"),
                           np.full(2, EPS), np.full(2, 1 - EPS)),
    "rank2_3block": Family("rank2_3block", 3, ("r1", "r2", "r3", "theta", "gamma"),
                           np.full(5, EPS), np.r_[np.full(3, 1 - EPS), np.full(2, ANGLE_MAX - EPS)]),
}


@dataclass
class RankMleResult:
    family: str
    params: np.ndarray
    B_hat: np.ndarray
    loglik: float
    initial_loglik: float
    converged: bool
    iterations: int
    boundary: np.ndarray
    trace: list = field(default_factory=list, repr=False)

    @property
    def boundary_hit(self) -> bool:
        return bool(np.any(self.boundary))

    def to_dict(self) -> dict:
        names = FAMILIES[self.family].param_names if self.family in FAMILIES else None
        return {
            "family": self.family,
            "params": dict(zip(names, map(float, self.params))) if names else self.params.tolist(),
            "B_hat": self.B_hat.tolist(),
            "loglik": self.loglik,
            "iterations": self.iterations,
            "converged": self.converged,
            "boundary": self.boundary.tolist(),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _maximize(fun, grad, x0, lower, upper, max_iter):
    scale = 1.0

    def objective(x):
        return -fun(x) / scale, -grad(x) / scale

    scale = max(abs(fun(x0)), 1.0)
    trace = [fun(x0)]
    res = minimize(objective, x0, jac=True, method="L-BFGS-B", bounds=list(zip(lower, upper)),
                   callback=lambda xk: trace.append(fun(xk)),
                   options={"maxiter": max_iter, "ftol": 1e-16, "gtol": 1e-13, "maxcor": 20})
    x = np.clip(res.x, lower, upper)
    # a stalled line search at the optimum still counts as converged
    converged = bool(res.success or np.linalg.norm(grad(x) / scale, np.inf) < 1e-8)
    return x, converged, int(res.nit), trace


def _fit_family(family: Family, stats: SufficientStats, rho, init, max_iter) -> RankMleResult:
    rho = check_rho(rho)
    if stats.K != family.K:
        raise ValueError(f"{family.name} needs K={family.K} blocks, got {stats.K}")
    if np.any(stats.n_pairs <= 0):
        raise EmptyBlockPair("a block pair has no vertex pairs")
    if init is None:
        x0 = family.init_from(stats.m / (rho * stats.n_pairs))
    else:
        x0 = np.asarray(init, dtype=np.float64)
        if x0.shape != family.lower.shape:
            raise ValueError(f"init must have {family.lower.size} entries")
        b0 = family.block_matrix(x0)
        if np.any(x0 <= 0) or np.any(x0 >= family.upper + EPS) or np.any(b0 <= 0) \
                or np.any(rho * b0 >= 1):
            raise InfeasibleInit(f"initial point {x0} is outside the feasible region")
        x0 = np.clip(x0, family.lower, family.upper)
    x, converged, nit, trace = _maximize(
        lambda x: family.loglik(x, stats, rho),
        lambda x: family.gradient(x, stats, rho),
        x0, family.lower, family.upper, max_iter)
    boundary = (x - family.lower < 1e-9) | (family.upper - x < 1e-9)
    if np.any(boundary):
        warnings.warn(f"{family.name} optimum on the parameter box edge", BoundaryWarning,
                      stacklevel=3)
    return RankMleResult(family=family.name, params=x, B_hat=family.block_matrix(x),
                         loglik=family.loglik(x, stats, rho), initial_loglik=trace[0],
                         converged=converged, iterations=nit, boundary=boundary, trace=trace)


def rank1_mle_2block(stats: SufficientStats, rho: float = 1.0, init=None,
                     max_iter: int = 1000) -> RankMleResult:
    """Maximum likelihood for B = [[p^2, pq], [pq, q^2]] over (p, q)."""
    return _fit_family(FAMILIES["rank1_2block"], stats, rho, init, max_iter)


def rank2_mle_3block(stats: SufficientStats, rho: float = 1.0, init=None,
                     max_iter: int = 2000) -> RankMleResult:
    """Maximum likelihood for the rank-two, positive semidefinite 3 x 3 family
    parametrized by (r1, r2, r3, theta, gamma)."""
    return _fit_family(FAMILIES["rank2_3block"], stats, rho, init, max_iter)


def unconstrained_mle(stats: SufficientStats, rho: float = 1.0, init=None,
                      max_iter: int = 1000) -> RankMleResult:
    """Numerically maximize the likelihood over the K(K+1)/2 free entries of B.

    Has the closed-form answer :func:`naive_mle` (inside the box); kept as an
    optimizer so the two routes can be compared.
    """
    rho = check_rho(rho)
    m, N = vech(stats.m), vech(stats.n_pairs)
    lower, upper = np.full(m.size, EPS), np.full(m.size, 1 / rho - EPS)
    x0 = np.full(m.size, 0.5 / rho) if init is None else np.asarray(init, dtype=np.float64)
    x, converged, nit, trace = _maximize(
        lambda b: binomial_loglik(b, m, N, rho), lambda b: binomial_score(b, m, N, rho),
        np.clip(x0, lower, upper), lower, upper, max_iter)
    B = np.zeros((stats.K, stats.K))
    B[np.triu_indices(stats.K)] = x
    B = B + np.triu(B, 1).T
    return RankMleResult(family="unconstrained", params=x, B_hat=B,
                         loglik=binomial_loglik(x, m, N, rho), initial_loglik=trace[0],
                         converged=converged, iterations=nit,
                         boundary=(x - lower < 1e-9) | (upper - x < 1e-9), trace=trace)
