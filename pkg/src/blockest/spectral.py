"""Adjacency spectral embedding, rank selection, clustering and the spectral
block-matrix estimator."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from sklearn.cluster import KMeans

from ._validation import block_indicators, check_adjacency, check_count, check_labels, check_rho
from .exceptions import ConvergenceFailure, EmptyBlock, EmptyClusterWarning, ModulusTie
from .model import LatentPositions

DENSE_SOLVER_MAX_N = 500
TIE_TOL = 1e-10
_V0_SEED = 20170715


@dataclass(frozen=True)
class Embedding:
    """Top-d eigenpairs of an adjacency matrix.

    ``eigenvalues`` are ordered by decreasing modulus (positive first on
    ties); ``gap`` is |lambda_d| - |lambda_{d+1}| when the solver computed it.
    """

    U_hat: np.ndarray
    eigenvalues: np.ndarray
    gap: float = np.nan

    @property
    def d(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def n(self) -> int:
        return self.U_hat.shape[0]

    @property
    def Lambda_hat(self) -> np.ndarray:
        return np.diag(self.eigenvalues)

    def low_rank(self) -> np.ndarray:
        return (self.U_hat * self.eigenvalues) @ self.U_hat.T

    def positions(self) -> np.ndarray:
        """Scaled embedding U_hat |Lambda_hat|^{1/2}."""
        return self.U_hat * np.sqrt(np.abs(self.eigenvalues))


@dataclass(frozen=True)
class ClusterResult:
    tau_hat: np.ndarray
    centers: np.ndarray
    inertia: float
    n_blocks: int
    repaired: bool = False

    @property
    def n_hat(self) -> np.ndarray:
        return np.bincount(self.tau_hat, minlength=self.n_blocks)

    @property
    def s_hat(self) -> np.ndarray:
        """n x K block indicator matrix."""
        return block_indicators(self.tau_hat, self.n_blocks)


def _order_and_sign(w: np.ndarray, V: np.ndarray):
    # decreasing modulus, positive first on ties, then original index
    order = np.lexsort((np.arange(w.size), w <= 0, -np.abs(w)))
    w, V = w[order], V[:, order].copy()
    for j in range(V.shape[1]):
        nz = np.flatnonzero(np.abs(V[:, j]) > 1e-12)
        if nz.size and V[nz[0], j] < 0:
            V[:, j] = -V[:, j]
    return w, V


def _start_vector(n: int) -> np.ndarray:
    return np.random.Generator(np.random.PCG64(_V0_SEED)).standard_normal(n)


def top_eigenpairs(A, d: int, solver: str = "auto", check_input: bool = True) -> Embedding:
    """The ``d`` eigenpairs of ``A`` largest in modulus.

    ``solver="dense"`` runs a full symmetric decomposition; ``"arpack"``
    runs implicitly restarted Lanczos for the d target pairs only, from a
    fixed start vector. ``"auto"`` uses the dense solver up to n = 500.
    """
    if check_input:
        A = check_adjacency(A, binary=False)
    n = A.shape[0]
    d = check_count(d, "d")
    if d > n:
        raise ValueError(f"d={d} exceeds n={n}")
    if solver == "auto":
        solver = "dense" if n <= DENSE_SOLVER_MAX_N or d >= n - 1 else "arpack"
    gap = np.nan
    if solver == "dense":
        w, V = np.linalg.eigh(A)
        w, V = _order_and_sign(w, V)
        if d < n:
            gap = abs(w[d - 1]) - abs(w[d])
        w, V = w[:d], V[:, :d]
    elif solver == "arpack":
        try:
            w, V = eigsh(A, k=d, which="LM", v0=_start_vector(n), tol=0)
        except ArpackNoConvergence as exc:
            raise ConvergenceFailure(str(exc)) from exc
        w, V = _order_and_sign(w, V)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    if gap < TIE_TOL:
        warnings.warn(f"eigenvalue moduli {d} and {d + 1} differ by {gap:.3g}", ModulusTie,
                      stacklevel=2)
    return Embedding(U_hat=V, eigenvalues=w, gap=gap)


def rank_threshold(A) -> float:
    """4 sqrt(max degree)."""
    return 4.0 * np.sqrt(np.max(np.asarray(A).sum(axis=1)))


def estimate_rank(A, check_input: bool = True) -> int:
    """Number of eigenvalues of ``A`` exceeding 4 sqrt(max degree) in modulus
    (strict inequality)."""
    if check_input:
        A = check_adjacency(A, binary=False)
    n = A.shape[0]
    t = rank_threshold(A)
    if n <= DENSE_SOLVER_MAX_N:
        return int(np.sum(np.abs(np.linalg.eigvalsh(A)) > t))
    k = 4
    while True:
        k = min(k, n - 1)
        mods = np.abs(eigsh(A, k=k, which="LM", v0=_start_vector(n), tol=1e-6,
                            return_eigenvectors=False))
        if np.any(np.abs(mods - t) <= 1e-4 * max(t, 1.0)):
            # too close to call at the working tolerance
            return int(np.sum(np.abs(np.linalg.eigvalsh(A)) > t))
        if mods.min() <= t or k == n - 1:
            if k == n - 1 and mods.min() > t:
                return int(np.sum(np.abs(np.linalg.eigvalsh(A)) > t))
            return int(np.sum(mods > t))
        k *= 2


def cluster_embedding(emb: Embedding | np.ndarray, K: int, seed=None, n_init: int = 10,
                      max_iter: int = 300) -> ClusterResult:
    """K-means (k-means++ seeding, Lloyd iterations, best of ``n_init``) on
    the rows of U_hat."""
    X = emb.U_hat if isinstance(emb, Embedding) else np.asarray(emb, dtype=np.float64)
    K = check_count(K, "K")
    n = X.shape[0]
    if K == 1:
        return ClusterResult(tau_hat=np.zeros(n, dtype=np.int64), centers=X.mean(0, keepdims=True),
                             inertia=float(((X - X.mean(0)) ** 2).sum()), n_blocks=1)
    seed = seed if seed is None or isinstance(seed, (int, np.integer)) else int(
        np.random.default_rng(seed).integers(2**32))
    if seed is not None:
        seed = int(seed) % 2**32
    km = KMeans(n_clusters=K, init="k-means++", n_init=n_init, max_iter=max_iter, tol=0.0,
                algorithm="lloyd", random_state=seed)
    with warnings.catch_warnings():
        # fewer distinct points than clusters is repaired below
        warnings.simplefilter("ignore")
        labels = km.fit_predict(X).astype(np.int64)
    centers = km.cluster_centers_.copy()
    repaired = False
    for k in range(K):
        if not np.any(labels == k):
            dist = ((X - centers[labels]) ** 2).sum(axis=1)
            far = int(np.argmax(dist))
            labels[far] = k
            centers[k] = X[far]
            repaired = True
    if repaired:
        warnings.warn("empty cluster re-seeded at the farthest point", EmptyClusterWarning,
                      stacklevel=2)
    inertia = float(((X - centers[labels]) ** 2).sum())
    return ClusterResult(tau_hat=labels, centers=centers, inertia=inertia, n_blocks=K,
                         repaired=repaired)


def _labels_of(clus, n_blocks):
    if isinstance(clus, ClusterResult):
        return clus.tau_hat, clus.n_blocks
    tau = check_labels(clus)
    return tau, int(n_blocks if n_blocks is not None else tau.max() + 1)


def spectral_block_estimate(emb: Embedding, clus, rho: float = 1.0,
                            n_blocks: int | None = None) -> np.ndarray:
    """Block averages of the rank-d reconstruction U_hat Lambda_hat U_hat^T,
    divided by rho.

    ``clus`` is a :class:`ClusterResult` or a label vector. Values are
    returned raw and may fall outside [0, 1].
    """
    rho = check_rho(rho)
    tau, K = _labels_of(clus, n_blocks)
    counts = np.bincount(tau, minlength=K).astype(np.float64)
    if np.any(counts == 0):
        raise EmptyBlock(f"blocks {np.flatnonzero(counts == 0).tolist()} are empty")
    M = block_indicators(tau, K).T @ emb.U_hat
    B = (M * emb.eigenvalues) @ M.T / (np.outer(counts, counts) * rho)
    return (B + B.T) / 2


def plug_in_latent_positions(emb: Embedding, clus, rho: float = 1.0,
                             n_blocks: int | None = None):
    """Estimated block means of U_hat |Lambda_hat|^{1/2} / sqrt(rho).

    Returns ``(B_hat, pi_hat, nu_hat)`` where ``B_hat = nu_hat I_pq
    nu_hat^T`` equals :func:`spectral_block_estimate` and ``nu_hat`` columns
    are reordered positive eigenvalues first.
    """
    rho = check_rho(rho)
    tau, K = _labels_of(clus, n_blocks)
    counts = np.bincount(tau, minlength=K).astype(np.float64)
    if np.any(counts == 0):
        raise EmptyBlock(f"blocks {np.flatnonzero(counts == 0).tolist()} are empty")
    order = np.argsort(emb.eigenvalues <= 0, kind="stable")
    lam = emb.eigenvalues[order]
    X = emb.U_hat[:, order] * np.sqrt(np.abs(lam) / rho)
    nu = (block_indicators(tau, K).T @ X) / counts[:, None]
    lp = LatentPositions(nu=nu, p_sig=int(np.sum(lam > 0)), q_sig=int(np.sum(lam <= 0)))
    return lp.gram(), counts / tau.shape[0], lp


def align_blocks(tau_hat, tau, n_blocks: int | None = None):
    """Permutation matching estimated to true labels.

    Returns ``(psi, agreement)`` with ``psi[k]`` the estimated label assigned
    to true block ``k``, chosen to maximize the number of agreeing vertices.
    """
    tau_hat, tau = check_labels(tau_hat), check_labels(tau)
    if tau_hat.shape != tau.shape:
        raise ValueError("label vectors differ in length")
    K = n_blocks or int(max(tau_hat.max(), tau.max())) + 1
    confusion = np.zeros((K, K), dtype=np.int64)
    np.add.at(confusion, (tau, tau_hat), 1)
    rows, cols = linear_sum_assignment(confusion, maximize=True)
    psi = np.empty(K, dtype=np.int64)
    psi[rows] = cols
    return psi, float(confusion[rows, cols].sum() / tau.shape[0])


def relabel(tau_hat, psi) -> np.ndarray:
    """Map estimated labels back to the true label space given ``psi``."""
    inverse = np.argsort(psi)
    return inverse[np.asarray(tau_hat)]


def two_to_infinity_residual(U_hat, U) -> float:
    """max_i ||(U_hat - U W)_i|| with W = W1 W2^T from the SVD
    U^T U_hat = W1 S W2^T."""
    U_hat, U = np.asarray(U_hat, dtype=np.float64), np.asarray(U, dtype=np.float64)
    if U_hat.shape != U.shape:
        raise ValueError(f"shape mismatch {U_hat.shape} vs {U.shape}")
    W1, _, W2t = np.linalg.svd(U.T @ U_hat)
    return float(np.max(np.linalg.norm(U_hat - U @ (W1 @ W2t), axis=1)))
