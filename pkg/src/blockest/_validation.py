"""Input validation helpers shared by the functional API and the estimators."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import NonSymmetric

SYMMETRY_TOL = 1e-12


def check_adjacency(A, *, binary: bool = True, copy: bool = False) -> np.ndarray:
    """Validate a dense, square, symmetric adjacency matrix.

    Sparse inputs are densified; the package works at desk scale (n <= 5000).
    Returns a float64 array.
    """
    if hasattr(A, "toarray"):
        A = A.toarray()
    A = check_array(A, dtype=np.float64, ensure_2d=True, copy=copy,
                    ensure_min_samples=1, ensure_min_features=1)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"adjacency matrix must be square, got shape {A.shape}")
    if not np.allclose(A, A.T, rtol=0.0, atol=SYMMETRY_TOL):
        raise NonSymmetric("adjacency matrix is not symmetric")
    if binary and not np.all((A == 0) | (A == 1)):
        raise ValueError("adjacency matrix must be 0/1 valued")
    return A


def check_labels(tau, n: int | None = None, n_blocks: int | None = None) -> np.ndarray:
    """Validate 0-based block labels and return them as an int64 vector."""
    tau = np.asarray(tau)
    if tau.ndim != 1:
        raise ValueError("labels must be a 1-d vector")
    if tau.size and not np.issubdtype(tau.dtype, np.integer):
        if not np.all(np.mod(tau, 1) == 0):
            raise ValueError("labels must be integers")
    tau = tau.astype(np.int64)
    if n is not None and tau.shape[0] != n:
        raise ValueError(f"expected {n} labels, got {tau.shape[0]}")
    if tau.size and tau.min() < 0:
        raise ValueError("labels must be non-negative (0-based)")
    if n_blocks is not None and tau.size and tau.max() >= n_blocks:
        raise ValueError(f"label {tau.max()} out of range for {n_blocks} blocks")
    return tau


def check_count(value, name: str, minimum: int = 1) -> int:
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_rho(rho) -> float:
    rho = float(rho)
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"sparsity factor rho must lie in (0, 1], got {rho}")
    return rho


def block_indicators(tau: np.ndarray, n_blocks: int) -> np.ndarray:
    """n x K 0/1 matrix whose k-th column is the indicator of block k."""
    S = np.zeros((tau.shape[0], n_blocks))
    S[np.arange(tau.shape[0]), tau] = 1.0
    return S
