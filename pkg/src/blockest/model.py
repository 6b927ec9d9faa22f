"""Stochastic blockmodel specification, latent positions and graph sampling.

Block labels are 0-based throughout the Python API; the file formats in
:mod:`blockest.io` use 1-based labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import SYMMETRY_TOL, check_count, check_labels, check_rho
from .exceptions import BadSimplex, NonSymmetric, OutOfRange, RankDeficiencyAmbiguous

RANK_TOL = 1e-10
SIMPLEX_TOL = 1e-12


def as_generator(seed) -> np.random.Generator:
    """Turn an int, SeedSequence, Generator or None into a PCG64 Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def spawn_seeds(seed: int, count: int) -> list[int]:
    """Derive ``count`` independent 64-bit seeds from a master seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _rank_cutoff(B: np.ndarray, rank_tol: float) -> float:
    return rank_tol * max(1.0, float(np.linalg.norm(B, 2)))


def _nonzero_spectrum(B: np.ndarray, rank_tol: float):
    """Eigenpairs of B above the rank cutoff, positive first, then negative,
    each group by decreasing modulus."""
    w, V = np.linalg.eigh(B)
    cutoff = _rank_cutoff(B, rank_tol)
    mod = np.abs(w)
    ambiguous = (mod > cutoff / 10) & (mod <= cutoff * 10)
    if np.any(ambiguous):
        raise RankDeficiencyAmbiguous(
            f"eigenvalue(s) {w[ambiguous]} too close to the rank cutoff {cutoff:.3g}"
        )
    keep = mod > cutoff
    w, V = w[keep], V[:, keep]
    order = np.lexsort((-np.abs(w), w <= 0))
    w, V = w[order], V[:, order]
    for j in range(V.shape[1]):
        nz = np.flatnonzero(np.abs(V[:, j]) > 1e-12)
        if nz.size and V[nz[0], j] < 0:
            V[:, j] = -V[:, j]
    return w, V


@dataclass(frozen=True)
class ModelSpec:
    """A K-block SBM with block matrix ``B``, block probabilities ``pi`` and
    sparsity factor ``rho``; ``d`` is the numerical rank of ``B``."""

    B: np.ndarray
    pi: np.ndarray
    rho: float = 1.0
    K: int = field(init=False)
    d: int = field(init=False)
    rank_tol: float = RANK_TOL

    def __post_init__(self):
        object.__setattr__(self, "B", _frozen(self.B))
        object.__setattr__(self, "pi", _frozen(self.pi))
        object.__setattr__(self, "K", self.B.shape[0])
        w, _ = _nonzero_spectrum(self.B, self.rank_tol)
        object.__setattr__(self, "d", int(w.size))

    def to_dict(self) -> dict:
        return {"B": self.B.tolist(), "pi": self.pi.tolist(), "rho": self.rho}


@dataclass(frozen=True)
class LatentPositions:
    """Rows of ``nu`` are the point masses nu_k with B = nu I_{p,q} nu^T."""

    nu: np.ndarray
    p_sig: int
    q_sig: int

    @property
    def d(self) -> int:
        return self.p_sig + self.q_sig

    @property
    def signature(self) -> np.ndarray:
        """Diagonal of I_{p,q}."""
        return np.r_[np.ones(self.p_sig), -np.ones(self.q_sig)]

    @property
    def Ipq(self) -> np.ndarray:
        return np.diag(self.signature)

    def gram(self) -> np.ndarray:
        return (self.nu * self.signature) @ self.nu.T


@dataclass(frozen=True)
class GraphSample:
    """A sampled graph with its block labels.

    ``P`` is rebuilt on demand from the generating model rather than stored,
    since it is as large as ``A``.
    """

    A: np.ndarray
    tau: np.ndarray
    seed: int | None = None
    model: ModelSpec | None = None

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def P(self) -> np.ndarray | None:
        if self.model is None:
            return None
        return expected_matrix(self.model, self.tau)

    def block_sizes(self, K: int | None = None) -> np.ndarray:
        K = K if K is not None else (self.model.K if self.model else int(self.tau.max()) + 1)
        return np.bincount(self.tau, minlength=K)


def validate_model(B, pi, rho: float = 1.0, rank_tol: float = RANK_TOL) -> ModelSpec:
    """Check a block matrix, block probabilities and sparsity factor.

    Raises
    ------
    NonSymmetric
        ``B`` differs from its transpose by more than 1e-12.
    OutOfRange
        An entry of ``B`` or of ``rho * B`` lies outside [0, 1], or ``rho``
        is outside (0, 1].
    BadSimplex
        ``pi`` has a non-positive entry or does not sum to one.
    """
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    pi = np.atleast_1d(np.asarray(pi, dtype=np.float64))
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError(f"B must be square, got shape {B.shape}")
    if pi.ndim != 1 or pi.shape[0] != B.shape[0]:
        raise ValueError(f"pi must have length {B.shape[0]}, got shape {pi.shape}")
    if not np.all(np.isfinite(B)):
        raise OutOfRange("B has non-finite entries")
    if np.max(np.abs(B - B.T)) > SYMMETRY_TOL:
        raise NonSymmetric("B is not symmetric")
    B = (B + B.T) / 2
    try:
        rho = check_rho(rho)
    except ValueError as exc:
        raise OutOfRange(str(exc)) from None
    if np.any(B < 0) or np.any(B > 1):
        raise OutOfRange("entries of B must lie in [0, 1]")
    if np.any(rho * B > 1):
        raise OutOfRange("entries of rho * B must lie in [0, 1]")
    if not np.all(np.isfinite(pi)) or np.any(pi <= 0):
        raise BadSimplex("block probabilities must be strictly positive")
    if abs(pi.sum() - 1.0) > SIMPLEX_TOL:
        raise BadSimplex(f"block probabilities sum to {pi.sum()!r}, not 1")
    return ModelSpec(B=B, pi=pi, rho=rho, rank_tol=rank_tol)


def latent_positions(model: ModelSpec) -> LatentPositions:
    """Factor B = nu I_{p,q} nu^T from the eigendecomposition of B.

    Columns follow the positive eigenvalues (largest first) and then the
    negative ones (largest modulus first). Each eigenvector is signed so
    that its first nonzero coordinate is positive.
    """
    w, V = _nonzero_spectrum(model.B, model.rank_tol)
    nu = V * np.sqrt(np.abs(w))
    return LatentPositions(nu=nu, p_sig=int(np.sum(w > 0)), q_sig=int(np.sum(w < 0)))


def block_counts(pi, n: int) -> np.ndarray:
    """Block sizes closest to n * pi that sum to n (largest remainder)."""
    raw = np.asarray(pi, dtype=np.float64) * n
    counts = np.floor(raw).astype(np.int64)
    short = n - counts.sum()
    counts[np.argsort(-(raw - counts), kind="stable")[:short]] += 1
    return counts


def sample_assignments(model: ModelSpec, n: int, seed=None, fixed: bool = False) -> np.ndarray:
    """Draw block labels.

    With ``fixed=True`` the block sizes are ``block_counts(pi, n)`` and the
    labels are laid out contiguously (block 0 first); otherwise labels are
    i.i.d. draws from ``pi``.
    """
    n = check_count(n, "n")
    if fixed:
        return np.repeat(np.arange(model.K), block_counts(model.pi, n))
    if model.K == 1:
        return np.zeros(n, dtype=np.int64)
    rng = as_generator(seed)
    return rng.choice(model.K, size=n, p=model.pi).astype(np.int64)


def expected_matrix(model: ModelSpec, tau) -> np.ndarray:
    """P with P_ij = rho * B[tau_i, tau_j]."""
    tau = check_labels(tau, n_blocks=model.K)
    return model.rho * model.B[np.ix_(tau, tau)]


def sample_adjacency(model: ModelSpec, tau, seed=None) -> GraphSample:
    """Sample a symmetric 0/1 adjacency matrix with self-loops.

    Entries on and above the diagonal are independent Bernoulli(P_ij); the
    lower triangle mirrors the upper one.
    """
    tau = check_labels(tau, n_blocks=model.K)
    rng = as_generator(seed)
    n = tau.shape[0]
    probs = (model.rho * model.B).astype(np.float32)[np.ix_(tau, tau)]
    # float32 uniforms in [0, 1): exact for probabilities 0 and 1
    upper = np.triu(rng.random((n, n), dtype=np.float32) < probs)
    A = (upper | upper.T).astype(np.float64)
    return GraphSample(A=A, tau=tau, seed=seed if isinstance(seed, int) else None, model=model)


def sample_graph(model: ModelSpec, n: int, seed=None, fixed: bool = False) -> GraphSample:
    """Sample labels and then the adjacency matrix from one seed."""
    rng = as_generator(seed)
    tau = sample_assignments(model, n, rng, fixed=fixed)
    g = sample_adjacency(model, tau, rng)
    return GraphSample(A=g.A, tau=tau, seed=seed if isinstance(seed, int) else None, model=model)
