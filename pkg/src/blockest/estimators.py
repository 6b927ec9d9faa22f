"""scikit-learn compatible estimators of the block probability matrix.

Each estimator is fitted on a single adjacency matrix ``A`` (n x n) and,
where the method needs them, known block labels passed as ``y``. Fitted
attributes follow the trailing-underscore convention, so the estimators
work with ``clone``, ``get_params`` and ``set_params``.

>>> est = SpectralBlockEstimator(n_blocks=2, random_state=0).fit(A)   # doctest: +SKIP
>>> est.B_corrected_                                                   # doctest: +SKIP
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_adjacency, check_labels, check_rho
from .asymptotics import plug_in_theta
from .likelihood import FAMILIES, binomial_counts, naive_mle, rank1_mle_2block, rank2_mle_3block
from .spectral import (cluster_embedding, estimate_rank, plug_in_latent_positions, rank_threshold,
                       spectral_block_estimate, top_eigenpairs)


class AdjacencySpectralEmbedding(TransformerMixin, BaseEstimator):
    """Embed the vertices of a graph with the top eigenpairs of its adjacency
    matrix.

    Parameters
    ----------
    n_components : int or None
        Embedding dimension. ``None`` selects it as the number of
        eigenvalues exceeding 4 sqrt(max degree) in modulus.
    solver : {"auto", "dense", "arpack"}
    scaled : bool
        If True, ``transform`` returns U_hat |Lambda_hat|^{1/2}; otherwise
        the unit eigenvectors U_hat.
    """

    def __init__(self, n_components=None, solver="auto", scaled=True):
        self.n_components = n_components
        self.solver = solver
        self.scaled = scaled

    def fit(self, X, y=None):
        A = check_adjacency(X, binary=False)
        self.rank_threshold_ = rank_threshold(A)
        d = self.n_components
        if d is None:
            d = estimate_rank(A, check_input=False)
            if d == 0:
                raise ValueError("no eigenvalue exceeds the rank threshold; set n_components")
        self.embedding_ = top_eigenpairs(A, d, solver=self.solver, check_input=False)
        self.n_components_ = d
        self.eigenvalues_ = self.embedding_.eigenvalues
        self.eigenvectors_ = self.embedding_.U_hat
        self.n_features_in_ = A.shape[1]
        return self

    def transform(self, X):
        """Project rows of X (adjacencies to the fitted vertices).

        On the training matrix this reproduces the fitted embedding exactly,
        since A U_hat = U_hat Lambda_hat.
        """
        check_is_fitted(self, "embedding_")
        X = np.asarray(X.toarray() if hasattr(X, "toarray") else X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ValueError(f"X must have {self.n_features_in_} columns")
        lam = self.eigenvalues_
        factor = np.sqrt(np.abs(lam)) / lam if self.scaled else 1.0 / lam
        return X @ self.eigenvectors_ * factor


class SpectralBlockEstimator(ClusterMixin, BaseEstimator):
    """Spectral estimate of B with optional plug-in bias correction.

    Parameters
    ----------
    n_blocks : int
        Number of blocks K.
    n_components : int or None
        rank(B); ``None`` estimates it from the spectrum.
    rho : float
        Known sparsity factor.
    regime : {"dense", "sparse"}
        Which bias formula the plug-in correction uses.
    n_init : int
        K-means restarts.
    random_state : int or None
        Seed for K-means.

    Attributes
    ----------
    B_hat_ : ndarray (K, K)
        Raw spectral estimate; may leave [0, 1].
    B_hat_clamped_ : ndarray (K, K)
    theta_hat_ : ndarray (K, K) or None
        Plug-in bias estimate; None if the estimated Delta is singular.
    B_corrected_ : ndarray (K, K)
        ``B_hat_ - theta_hat_ / (n rho)``.
    labels_ : ndarray (n,)
    """

    def __init__(self, n_blocks=2, n_components=None, rho=1.0, regime="dense", n_init=10,
                 solver="auto", random_state=None):
        self.n_blocks = n_blocks
        self.n_components = n_components
        self.rho = rho
        self.regime = regime
        self.n_init = n_init
        self.solver = solver
        self.random_state = random_state

    def fit(self, X, y=None):
        A = check_adjacency(X)
        rho = check_rho(self.rho)
        n = A.shape[0]
        ase = AdjacencySpectralEmbedding(self.n_components, solver=self.solver).fit(A)
        emb = ase.embedding_
        if y is None:
            self.clusters_ = cluster_embedding(emb, self.n_blocks, seed=self.random_state,
                                               n_init=self.n_init)
            labels = self.clusters_.tau_hat
        else:
            self.clusters_ = None
            labels = check_labels(y, n=n, n_blocks=self.n_blocks)
        self.embedding_ = emb
        self.n_components_ = ase.n_components_
        self.rank_threshold_ = ase.rank_threshold_
        self.labels_ = labels
        self.B_hat_ = spectral_block_estimate(emb, labels, rho, n_blocks=self.n_blocks)
        self.B_hat_clamped_ = np.clip(self.B_hat_, 0.0, 1.0)
        _, self.pi_hat_, self.nu_hat_ = plug_in_latent_positions(emb, labels, rho, self.n_blocks)
        try:
            self.theta_hat_ = plug_in_theta(self.B_hat_, self.pi_hat_, self.nu_hat_, self.regime)
        except ArithmeticError:
            self.theta_hat_ = None
        correction = 0.0 if self.theta_hat_ is None else self.theta_hat_ / (n * rho)
        self.B_corrected_ = self.B_hat_ - correction
        return self


class NaiveBlockEstimator(BaseEstimator):
    """Per-block edge frequencies given known labels ``y``."""

    def __init__(self, n_blocks=None, rho=1.0):
        self.n_blocks = n_blocks
        self.rho = rho

    def fit(self, X, y):
        A = check_adjacency(X)
        if y is None:
            raise ValueError("NaiveBlockEstimator needs block labels y")
        tau = check_labels(y, n=A.shape[0], n_blocks=self.n_blocks)
        self.stats_ = binomial_counts(A, tau, self.n_blocks, check_input=False)
        self.B_hat_ = naive_mle(self.stats_, check_rho(self.rho))
        self.B_hat_clamped_ = np.clip(self.B_hat_, 0.0, 1.0)
        return self


class RankConstrainedBlockEstimator(BaseEstimator):
    """Maximum likelihood over a low-rank parametrization of B, given labels.

    Parameters
    ----------
    family : {"rank1_2block", "rank2_3block"}
    rho : float
    init : array-like or None
        Starting parameters. ``None`` derives them from the spectral
        estimate with the same labels.
    """

    def __init__(self, family="rank1_2block", rho=1.0, init=None, max_iter=2000):
        self.family = family
        self.rho = rho
        self.init = init
        self.max_iter = max_iter

    def fit(self, X, y):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        fam = FAMILIES[self.family]
        A = check_adjacency(X)
        if y is None:
            raise ValueError("RankConstrainedBlockEstimator needs block labels y")
        tau = check_labels(y, n=A.shape[0], n_blocks=fam.K)
        rho = check_rho(self.rho)
        self.stats_ = binomial_counts(A, tau, fam.K, check_input=False)
        init = self.init
        if init is None:
            d = 1 if self.family == "rank1_2block" else 2
            emb = top_eigenpairs(A, d, check_input=False)
            init = fam.init_from(spectral_block_estimate(emb, tau, rho, n_blocks=fam.K))
        fit = rank1_mle_2block if self.family == "rank1_2block" else rank2_mle_3block
        self.result_ = fit(self.stats_, rho, init=init, max_iter=self.max_iter)
        self.params_ = self.result_.params
        self.B_hat_ = self.result_.B_hat
        return self
