"""Reading and writing graphs, labels and embeddings.

Edge list format: a header line ``n K seed`` (seed may be ``-``), then one
line ``i j`` per undirected edge with 1-based vertex indices and i <= j;
self-loops appear as ``i i``. Labels live in a sidecar file with one
1-based block label per line.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .spectral import Embedding

DENSE_CSV_MAX_N = 5000


def write_edgelist(path, A, K: int, seed=None) -> None:
    A = np.asarray(A)
    n = A.shape[0]
    i, j = np.nonzero(np.triu(A))
    with open(path, "w") as fh:
        fh.write(f"{n} {K} {'-' if seed is None else int(seed)}\n")
        np.savetxt(fh, np.c_[i + 1, j + 1], fmt="%d")


def read_edgelist(path):
    """Return ``(A, K, seed)`` from an edge list file."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError(f"{path}: header must be 'n K seed'")
        n, K = int(header[0]), int(header[1])
        seed = None if header[2] == "-" else int(header[2])
        body = fh.read()
    if body.strip():
        edges = np.loadtxt(body.splitlines(), dtype=np.int64, ndmin=2)
    else:
        edges = np.empty((0, 2), dtype=np.int64)
    A = np.zeros((n, n))
    if edges.size:
        if edges.shape[1] != 2:
            raise ValueError(f"{path}: edge lines must hold two vertex indices")
        if edges.min() < 1 or edges.max() > n:
            raise ValueError(f"{path}: vertex index out of range 1..{n}")
        A[edges[:, 0] - 1, edges[:, 1] - 1] = 1
        A[edges[:, 1] - 1, edges[:, 0] - 1] = 1
    return A, K, seed


def write_labels(path, tau) -> None:
    np.savetxt(path, np.asarray(tau, dtype=np.int64) + 1, fmt="%d")


def read_labels(path) -> np.ndarray:
    tau = np.loadtxt(path, dtype=np.int64, ndmin=1)
    if tau.size and tau.min() < 1:
        raise ValueError(f"{path}: labels are 1-based")
    return tau - 1


def write_dense_csv(path, M) -> None:
    M = np.asarray(M)
    if M.shape[0] > DENSE_CSV_MAX_N:
        raise ValueError(f"dense export is limited to n <= {DENSE_CSV_MAX_N}")
    fmt = "%d" if np.all(np.mod(M, 1) == 0) else "%.17g"
    np.savetxt(path, M, delimiter=",", fmt=fmt)


def read_dense_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def read_graph(path):
    """Read a graph from an edge list or, for ``.csv`` files, a dense matrix.

    Returns ``(A, K, seed)``; K and seed are None for CSV input.
    """
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_dense_csv(path), None, None
    return read_edgelist(path)


def write_embedding(stem, emb: Embedding, d_hat: int | None = None,
                    threshold: float | None = None) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` (n rows x d columns of U_hat) and a JSON sidecar
    ``<stem>.json`` with the eigenvalues, d_hat and the rank threshold."""
    stem = Path(stem)
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    np.savetxt(csv_path, emb.U_hat, delimiter=",", fmt="%.17g")
    json_path.write_text(json.dumps({
        "eigenvalues": emb.eigenvalues.tolist(),
        "d": emb.d,
        "d_hat": d_hat,
        "threshold": threshold,
    }, indent=2))
    return csv_path, json_path


def read_embedding(stem) -> tuple[Embedding, dict]:
    stem = Path(stem)
    U = np.loadtxt(stem.with_suffix(".csv"), delimiter=",", ndmin=2)
    meta = json.loads(stem.with_suffix(".json").read_text())
    return Embedding(U_hat=U, eigenvalues=np.asarray(meta["eigenvalues"])), meta
