"""Closed-form limiting bias and variance of the three block-matrix estimators.

All quantities refer to the scaled errors ``n sqrt(rho) (B_hat_kl - B_kl)``.
``regime="dense"`` is the rho == 1 theory, where Bernoulli variances are
``B (1 - B)``; ``regime="sparse"`` is rho -> 0 with n rho = omega(sqrt n),
where they become ``B``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .exceptions import DegenerateParams, SingularDelta, SingularDeltaHat, SingularInfo
from .model import LatentPositions, ModelSpec, latent_positions, validate_model

DELTA_COND_MAX = 1e12
REGIMES = ("dense", "sparse")


def _check_regime(regime: str) -> str:
    if regime not in REGIMES:
        raise ValueError(f"regime must be one of {REGIMES}, got {regime!r}")
    return regime


def bernoulli_weights(B: np.ndarray, regime: str) -> np.ndarray:
    """Per-entry variance factor: B (1 - B) when dense, B when sparse."""
    B = np.asarray(B, dtype=np.float64)
    return B * (1.0 - B) if _check_regime(regime) == "dense" else B.copy()


def vech(M: np.ndarray) -> np.ndarray:
    """Upper-triangular entries (k <= l) in row order: (11, 12, ..., 1K, 22, ...)."""
    return np.asarray(M)[np.triu_indices(np.shape(M)[0])]


def _delta_zeta(pi, nu, sig, error=SingularDelta):
    pi = np.asarray(pi, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    Delta = nu.T @ (pi[:, None] * nu)
    Delta = (Delta + Delta.T) / 2
    cond = np.linalg.cond(Delta)
    if not np.isfinite(cond) or cond > DELTA_COND_MAX:
        raise error(f"Delta is singular to working precision (condition number {cond:.3g})")
    Delta_inv = np.linalg.solve(Delta, np.eye(Delta.shape[0]))
    Delta_inv = (Delta_inv + Delta_inv.T) / 2
    zeta = nu @ Delta_inv @ nu.T
    return Delta, Delta_inv, (zeta + zeta.T) / 2, cond


def delta_and_zeta(pi, nu: LatentPositions):
    """Return ``(Delta, zeta)`` with Delta = sum_k pi_k nu_k nu_k^T and
    zeta_kl = nu_k^T Delta^{-1} nu_l.

    Raises :class:`SingularDelta` when cond(Delta) exceeds 1e12.
    """
    Delta, _, zeta, _ = _delta_zeta(pi, nu.nu, nu.signature)
    return Delta, zeta


def _theta(B, pi, nu, sig, regime, error=SingularDelta):
    pi = np.asarray(pi, dtype=np.float64)
    _, Dinv, zeta, _ = _delta_zeta(pi, nu, sig, error)
    V = bernoulli_weights(B, regime)
    # G_kl = nu_k^T Delta^-1 I_pq Delta^-1 nu_l
    G = nu @ Dinv @ (sig[:, None] * Dinv) @ nu.T
    c = V @ pi
    first = (c[:, None] + c[None, :]) * G
    X = zeta @ ((pi * c)[:, None] * G)
    theta = first - (X + X.T)
    return (theta + theta.T) / 2


def theta_dense(model: ModelSpec, nu: LatentPositions | None = None) -> np.ndarray:
    """Order-1/n bias of the spectral estimator when rho == 1."""
    nu = latent_positions(model) if nu is None else nu
    return _theta(model.B, model.pi, nu.nu, nu.signature, "dense")


def theta_sparse(model: ModelSpec, nu: LatentPositions | None = None) -> np.ndarray:
    """Order-1/(n rho) bias of the spectral estimator when rho -> 0."""
    nu = latent_positions(model) if nu is None else nu
    return _theta(model.B, model.pi, nu.nu, nu.signature, "sparse")


def _sigma(B, pi, zeta, regime, squared_factor=False):
    pi = np.asarray(pi, dtype=np.float64)
    V = bernoulli_weights(B, regime)
    K = len(pi)
    power = 2 if squared_factor else 1
    factor = (1.0 / pi - 2.0 * np.diag(zeta)) ** power
    Z2 = zeta**2
    PV = pi[:, None] * pi[None, :] * V
    S = np.empty((K, K))
    for k in range(K):
        S[k, k] = (
            4 * V[k, k] * zeta[k, k] ** 2
            + 4 * np.sum(pi * V[k] * Z2[k]) * factor[k]
            + 2 * Z2[k] @ PV @ Z2[k]
        )
        for l in range(k + 1, K):
            cross = zeta[k][:, None] * zeta[l][None, :] + zeta[l][:, None] * zeta[k][None, :]
            S[k, l] = S[l, k] = (
                (V[k, k] + V[l, l]) * zeta[k, l] ** 2
                + 2 * V[k, l] * zeta[k, k] * zeta[l, l]
                + np.sum(pi * V[k] * Z2[l]) * factor[k]
                + np.sum(pi * V[l] * Z2[k]) * factor[l]
                - 2 * np.sum(pi * (V[k] + V[l]) * zeta[k] * zeta[l]) * zeta[k, l]
                + 0.5 * np.sum(PV * cross**2)
            )
    return S


def sigma_dense(model: ModelSpec, nu: LatentPositions | None = None) -> np.ndarray:
    """Limiting variances of n (B_hat^(S) - B - theta/n) when rho == 1."""
    nu = latent_positions(model) if nu is None else nu
    _, zeta = delta_and_zeta(model.pi, nu)
    return _sigma(model.B, model.pi, zeta, "dense")


def sigma_sparse(model: ModelSpec, nu: LatentPositions | None = None,
                 squared_factor: bool = False) -> np.ndarray:
    """Limiting variances of n sqrt(rho) (B_hat^(S) - B - theta~/(n rho)).

    By default this is the dense formula with every B(1-B) replaced by B.
    ``squared_factor=True`` instead squares the (1/pi_k - 2 zeta_kk) factors,
    a variant kept for comparison; it does not reduce to the naive variances
    when B is invertible.
    """
    nu = latent_positions(model) if nu is None else nu
    _, zeta = delta_and_zeta(model.pi, nu)
    return _sigma(model.B, model.pi, zeta, "sparse", squared_factor=squared_factor)


def naive_variance(model_or_B, regime: str = "dense", pi=None) -> np.ndarray:
    """Limiting variances of the per-block edge-frequency estimator.

    Diagonal ``2 V_kk / pi_k^2``, off-diagonal ``V_kl / (pi_k pi_l)`` with
    ``V = B(1-B)`` (dense) or ``V = B`` (sparse).
    """
    if isinstance(model_or_B, ModelSpec):
        B, pi = model_or_B.B, model_or_B.pi
    else:
        B, pi = np.asarray(model_or_B, dtype=np.float64), np.asarray(pi, dtype=np.float64)
    V = bernoulli_weights(B, regime)
    out = V / np.outer(pi, pi)
    out[np.diag_indices_from(out)] *= 2
    return out


@dataclass(frozen=True)
class AsymptoticSummary:
    regime: str
    Delta: np.ndarray
    zeta: np.ndarray
    theta: np.ndarray
    sigma2: np.ndarray
    naive_var: np.ndarray
    condition: float


def asymptotic_summary(model: ModelSpec, regime: str = "dense",
                       squared_factor: bool = False) -> AsymptoticSummary:
    """Bundle every limiting quantity for one model and regime."""
    _check_regime(regime)
    nu = latent_positions(model)
    Delta, _, zeta, cond = _delta_zeta(model.pi, nu.nu, nu.signature)
    if regime == "dense":
        theta, sigma2 = theta_dense(model, nu), sigma_dense(model, nu)
    else:
        theta, sigma2 = theta_sparse(model, nu), sigma_sparse(model, nu, squared_factor)
    return AsymptoticSummary(regime=regime, Delta=Delta, zeta=zeta, theta=theta,
                             sigma2=sigma2, naive_var=naive_variance(model, regime),
                             condition=cond)


def plug_in_theta(B_hat, pi_hat, nu_hat: LatentPositions, regime: str = "dense") -> np.ndarray:
    """Bias estimate obtained by substituting estimated quantities into the
    theta (dense) or theta~ (sparse) formula."""
    return _theta(np.asarray(B_hat, dtype=np.float64), pi_hat, nu_hat.nu,
                  nu_hat.signature, regime, error=SingularDeltaHat)


# --- Fisher information of the low-rank parametrizations -------------------


@dataclass(frozen=True)
class FisherBundle:
    """Per-pair limiting information, Jacobian of vech(B) and MLE covariance."""

    info: np.ndarray
    jacobian: np.ndarray
    mle_cov: np.ndarray


def pair_weights(pi) -> np.ndarray:
    """Limits of n_kl / n^2: pi_k^2 / 2 on the diagonal, pi_k pi_l off it,
    in vech order."""
    pi = np.asarray(pi, dtype=np.float64)
    W = np.outer(pi, pi)
    W[np.diag_indices_from(W)] /= 2
    return vech(W)


def information_from_jacobian(b, jacobian, weights) -> np.ndarray:
    """sum_kl w_kl g_kl g_kl^T / (B_kl (1 - B_kl)) over the vech entries."""
    b = np.asarray(b, dtype=np.float64)
    if np.any(b <= 0) or np.any(b >= 1):
        raise DegenerateParams("every block probability must lie strictly inside (0, 1)")
    scale = np.asarray(weights) / (b * (1 - b))
    info = jacobian.T @ (scale[:, None] * jacobian)
    return (info + info.T) / 2


def _bundle(info, J) -> FisherBundle:
    if np.linalg.cond(info) > 1e14:
        raise SingularInfo("Fisher information is singular")
    cov = J @ np.linalg.solve(info, J.T)
    return FisherBundle(info=info, jacobian=J, mle_cov=(cov + cov.T) / 2)


def rank1_jacobian(p, q) -> np.ndarray:
    """d vech(B) / d(p, q) for B = [[p^2, pq], [pq, q^2]]."""
    return np.array([[2 * p, 0.0], [q, p], [0.0, 2 * q]])


def fisher_info_2block(p: float, q: float, pi_p: float) -> FisherBundle:
    """Fisher information of the rank-one two-block model in (p, q)."""
    pi_q = 1.0 - pi_p
    if not (0 < p < 1 and 0 < q < 1 and 0 < pi_p < 1):
        raise DegenerateParams("p, q and pi_p must lie strictly inside (0, 1)")
    pq = p * q
    info = np.array([
        [2 * pi_p**2 / (1 - p**2) + pi_p * pi_q * q / (p * (1 - pq)), pi_p * pi_q / (1 - pq)],
        [pi_p * pi_q / (1 - pq), 2 * pi_q**2 / (1 - q**2) + pi_p * pi_q * p / (q * (1 - pq))],
    ])
    return _bundle(info, rank1_jacobian(p, q))


def rank2_block_matrix(r1, r2, r3, th, ga) -> np.ndarray:
    """B of the three-block, rank-two PSD family."""
    return np.array([
        [r1**2, r1 * r2 * np.cos(th), r1 * r3 * np.cos(ga)],
        [r1 * r2 * np.cos(th), r2**2, r2 * r3 * np.cos(th - ga)],
        [r1 * r3 * np.cos(ga), r2 * r3 * np.cos(th - ga), r3**2],
    ])


def rank2_jacobian(r1, r2, r3, th, ga) -> np.ndarray:
    """6 x 5 Jacobian of vech(B) = (B11, B12, B13, B22, B23, B33) with
    respect to (r1, r2, r3, theta, gamma)."""
    ct, st = np.cos(th), np.sin(th)
    cg, sg = np.cos(ga), np.sin(ga)
    cd, sd = np.cos(th - ga), np.sin(th - ga)
    return np.array([
        [2 * r1, 0, 0, 0, 0],
        [r2 * ct, r1 * ct, 0, -r1 * r2 * st, 0],
        [r3 * cg, 0, r1 * cg, 0, -r1 * r3 * sg],
        [0, 2 * r2, 0, 0, 0],
        [0, r3 * cd, r2 * cd, -r2 * r3 * sd, r2 * r3 * sd],
        [0, 0, 2 * r3, 0, 0],
    ], dtype=np.float64)


def fisher_info_3block(r1, r2, r3, th, ga, pi) -> FisherBundle:
    """Fisher information of the three-block rank-two model in
    (r1, r2, r3, theta, gamma)."""
    B = rank2_block_matrix(r1, r2, r3, th, ga)
    J = rank2_jacobian(r1, r2, r3, th, ga)
    info = information_from_jacobian(vech(B), J, pair_weights(pi))
    return _bundle(info, J)


# --- MSE surfaces -----------------------------------------------------------


def _mse_point(B, pi, fisher) -> dict:
    model = validate_model(B, pi)
    mse_S = float(vech(sigma_dense(model)).sum())
    mse_N = float(vech(naive_variance(model, "dense")).sum())
    if fisher is None:
        # full rank: the rank-constrained and naive MLEs coincide
        mse_M = mse_N if model.d == model.K else np.nan
    else:
        mse_M = float(np.trace(fisher().mle_cov))
    return {"mse_S": mse_S, "mse_N": mse_N, "mse_M": mse_M}


def mse_point(family: str, a: float, b: float, pi) -> dict:
    """MSE of the bias-corrected spectral, naive and rank-constrained
    estimators at one parameter point.

    ``family="2block"``: (a, b) = (p, q), pi = (pi_p, pi_q).
    ``family="3block"``: (a, b) = (r2, theta) on the slice r1 = 1 - r2,
    r3 = 0.7, gamma = 0.5.
    """
    if family == "2block":
        p, q = a, b
        B = np.array([[p * p, p * q], [p * q, q * q]])
        return _mse_point(B, pi, lambda: fisher_info_2block(p, q, pi[0]))
    if family == "3block":
        r2, th = a, b
        params = (1.0 - r2, r2, 0.7, th, 0.5)
        return _mse_point(rank2_block_matrix(*params), pi,
                          lambda: fisher_info_3block(*params, pi))
    raise ValueError(f"unknown family {family!r}")


def mse_at_model(B, pi) -> pd.DataFrame:
    """Single-row MSE table for an explicit block matrix.

    The rank-constrained column is filled only when B has full rank, where
    that estimator is the naive one.
    """
    row = {"param1": np.nan, "param2": np.nan, **_mse_point(B, pi, None), "feasible": True}
    df = pd.DataFrame([row])
    df["ratio_SN"] = df["mse_S"] / df["mse_N"]
    df["ratio_SM"] = df["mse_S"] / df["mse_M"]
    return df[["param1", "param2", "mse_S", "mse_N", "mse_M", "ratio_SN", "ratio_SM", "feasible"]]


FIGURE_GRIDS = {
    "2block": ((0.1, 0.9), (0.1, 0.9)),
    "3block": ((0.1, 0.9), (0.1, np.pi / 2 - 0.1)),
}
DEFAULT_PI = {"2block": (0.5, 0.5), "3block": (1 / 3, 1 / 3, 1 / 3)}


def mse_surface(family: str = "2block", grid=None, pi=None, resolution: int = 33) -> pd.DataFrame:
    """Tabulate MSE ratios over a rectangular parameter grid.

    ``grid`` is either ``((lo1, hi1), (lo2, hi2))``, expanded with
    ``resolution`` points per axis, or a pair of explicit value arrays.
    Points where the model is degenerate are kept with ``feasible=False``.
    """
    if family not in FIGURE_GRIDS:
        raise ValueError(f"unknown family {family!r}")
    grid = FIGURE_GRIDS[family] if grid is None else grid
    pi = np.asarray(DEFAULT_PI[family] if pi is None else pi, dtype=np.float64)
    axes = []
    for axis in grid:
        axis = np.asarray(axis, dtype=np.float64)
        axes.append(np.linspace(axis[0], axis[1], resolution) if axis.shape == (2,) else axis)
    rows = []
    for a in axes[0]:
        for b in axes[1]:
            row = {"param1": a, "param2": b}
            try:
                row.update(mse_point(family, a, b, pi))
                row["feasible"] = True
            except (ValueError, ArithmeticError):
                row.update(mse_S=np.nan, mse_N=np.nan, mse_M=np.nan, feasible=False)
            rows.append(row)
    df = pd.DataFrame(rows)
    df["ratio_SN"] = df["mse_S"] / df["mse_N"]
    df["ratio_SM"] = df["mse_S"] / df["mse_M"]
    return df[["param1", "param2", "mse_S", "mse_N", "mse_M", "ratio_SN", "ratio_SM", "feasible"]]
