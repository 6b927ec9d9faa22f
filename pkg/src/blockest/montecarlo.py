"""Replicated simulation of the estimators and comparison with their limits.

Every replicate draws its graph from its own seed, derived from a master seed
with :func:`blockest.model.spawn_seeds`, so a table depends only on the
model, n, M and the master seed, whatever the worker count.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats as sps

from .asymptotics import AsymptoticSummary, plug_in_theta
from .exceptions import MismatchedRegime, ModulusTie, SparseRegimeWarning
from .likelihood import FAMILIES, binomial_counts, naive_mle, rank1_mle_2block, rank2_mle_3block
from .model import (ModelSpec, as_generator, expected_matrix, sample_adjacency,
                    sample_assignments, spawn_seeds, validate_model)
from .spectral import (align_blocks, cluster_embedding, estimate_rank, plug_in_latent_positions,
                       spectral_block_estimate, top_eigenpairs, two_to_infinity_residual)

logger = logging.getLogger(__name__)

ESTIMATORS = ("naive", "spectral", "recovered", "mle", "rank", "residual")
THREADS_ENV = "BLOCKEST_THREADS"


@dataclass(frozen=True)
class RhoRule:
    """Sparsity schedule: ``constant`` (rho_n = value) or ``power``
    (rho_n = n ** -value)."""

    kind: str = "constant"
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "power"):
            raise ValueError(f"unknown rho rule {self.kind!r}")

    def rho(self, n: int) -> float:
        return float(self.value) if self.kind == "constant" else float(n) ** -float(self.value)

    @classmethod
    def parse(cls, spec) -> "RhoRule":
        """Accept a RhoRule, a number, ``"power:0.25"`` or a dict."""
        if isinstance(spec, RhoRule):
            return spec
        if spec is None:
            return cls()
        if isinstance(spec, (int, float)):
            return cls("constant", float(spec))
        if isinstance(spec, dict):
            return cls(spec["kind"], float(spec["value"]))
        kind, _, value = str(spec).partition(":")
        return cls(kind, float(value))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value}


def default_threads() -> int:
    value = os.environ.get(THREADS_ENV)
    return int(value) if value else (os.cpu_count() or 1)


def _vech_pairs(K):
    return [(k, l) for k in range(K) for l in range(k, K)]


def _put(rec, name, M):
    for k, l in _vech_pairs(M.shape[0]):
        rec[f"{name}_{k + 1}{l + 1}"] = float(M[k, l])


def _replicate(job) -> dict:
    index, seed, model, n, estimators, fixed, regime = job
    rec = {"replicate": index, "seed": seed, "error": ""}
    try:
        rng = as_generator(seed)
        tau = sample_assignments(model, n, rng, fixed=fixed)
        A = sample_adjacency(model, tau, rng).A
        cluster_seed = int(rng.integers(2**32))
        K, rho = model.K, model.rho
        counts = np.bincount(tau, minlength=K)
        for k in range(K):
            rec[f"n_{k + 1}"] = int(counts[k])
        if "naive" in estimators:
            _put(rec, "naive", naive_mle(binomial_counts(A, tau, K, check_input=False), rho))
        if "rank" in estimators:
            rec["d_hat"] = estimate_rank(A, check_input=False)
        needs_embedding = {"spectral", "recovered", "residual", "mle"} & set(estimators)
        if needs_embedding:
            emb = top_eigenpairs(A, model.d, check_input=False)
        if "spectral" in estimators or "mle" in estimators:
            B_s, pi_hat, nu_hat = plug_in_latent_positions(emb, tau, rho, K)
            _put(rec, "spectral", B_s)
            theta_hat = plug_in_theta(B_s, pi_hat, nu_hat, regime)
            _put(rec, "spectral_corrected", B_s - theta_hat / (n * rho))
        if "mle" in estimators:
            stats = binomial_counts(A, tau, K, check_input=False)
            fit = None
            if K == 2 and model.d == 1:
                fit = rank1_mle_2block
            elif K == 3 and model.d == 2:
                fit = rank2_mle_3block
            if fit is not None:
                family = FAMILIES["rank1_2block" if K == 2 else "rank2_3block"]
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    res = fit(stats, rho, init=family.init_from(B_s))
                _put(rec, "mle", res.B_hat)
                rec["mle_converged"] = res.converged
        if "recovered" in estimators:
            clus = cluster_embedding(emb, K, seed=cluster_seed)
            psi, agreement = align_blocks(clus.tau_hat, tau, K)
            rec["agreement"] = agreement
            rec["recovered"] = bool(agreement == 1.0)
            B_r = spectral_block_estimate(emb, clus, rho)[np.ix_(psi, psi)]
            _put(rec, "recovered_spectral", B_r)
            B_hat, pi_hat, nu_hat = plug_in_latent_positions(emb, clus, rho)
            theta_hat = plug_in_theta(B_hat, pi_hat, nu_hat, regime)[np.ix_(psi, psi)]
            _put(rec, "recovered_spectral_corrected", B_r - theta_hat / (n * rho))
            stats_hat = binomial_counts(A, clus.tau_hat, K, check_input=False)
            _put(rec, "recovered_naive", naive_mle(stats_hat, rho)[np.ix_(psi, psi)])
        if "residual" in estimators:
            U = top_eigenpairs(expected_matrix(model, tau), model.d, check_input=False).U_hat
            rec["residual"] = two_to_infinity_residual(emb.U_hat, U)
    except Exception as exc:  # recorded per replicate, never aborts the sweep
        logger.warning("replicate %d failed: %s", index, exc)
        rec["error"] = f"{type(exc).__name__}: {exc}"
    return rec


@dataclass
class ReplicateTable:
    """Per-replicate estimates with enough metadata to reproduce them."""

    model: ModelSpec
    n: int
    rho_rule: RhoRule
    M: int
    seed: int
    estimators: tuple
    fixed_sizes: bool
    regime: str
    records: pd.DataFrame = field(repr=False)

    @property
    def rho(self) -> float:
        return self.rho_rule.rho(self.n)

    @property
    def seeds(self) -> list[int]:
        return self.records["seed"].tolist()

    def ok(self) -> pd.DataFrame:
        """Records of replicates that did not fail."""
        return self.records[self.records["error"] == ""]

    def config(self) -> dict:
        return {
            "model": {"B": self.model.B.tolist(), "pi": self.model.pi.tolist()},
            "n": self.n, "rho_rule": self.rho_rule.to_dict(), "M": self.M, "seed": self.seed,
            "estimators": list(self.estimators), "fixed_sizes": self.fixed_sizes,
            "regime": self.regime,
        }

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        config = self.config()
        manifest = {
            "config": config,
            "config_hash": config_hash(config),
            "rho": self.rho,
            "seeds": self.seeds,
            "excluded": int((self.records["error"] != "").sum()),
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
        self.records.to_csv(directory / "records.csv", index=False)
        return directory

    @classmethod
    def load(cls, directory) -> "ReplicateTable":
        directory = Path(directory)
        cfg = json.loads((directory / "manifest.json").read_text())["config"]
        rule = RhoRule.parse(cfg["rho_rule"])
        model = validate_model(cfg["model"]["B"], cfg["model"]["pi"], rule.rho(cfg["n"]))
        records = pd.read_csv(directory / "records.csv", keep_default_na=False,
                              na_values=[""], dtype={"error": str})
        records["error"] = records["error"].fillna("")
        return cls(model=model, n=cfg["n"], rho_rule=rule, M=cfg["M"], seed=cfg["seed"],
                   estimators=tuple(cfg["estimators"]), fixed_sizes=cfg["fixed_sizes"],
                   regime=cfg["regime"], records=records)


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def _map(jobs, n_jobs):
    if n_jobs <= 1 or len(jobs) < 2:
        return [_replicate(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_replicate, jobs, chunksize=max(1, len(jobs) // (4 * n_jobs))))


def run_replicates(model: ModelSpec, n: int, M: int, rho_rule=None,
                   estimators=("naive", "spectral"), seed: int = 0, fixed_sizes: bool = True,
                   regime: str | None = None, n_jobs: int = 1) -> ReplicateTable:
    """Simulate ``M`` graphs on ``n`` vertices and record the requested estimates.

    ``rho_rule`` defaults to the model's own constant rho. ``regime``
    selects the plug-in bias formula and defaults to ``"dense"`` for a
    constant rule and ``"sparse"`` for a power rule. ``fixed_sizes`` fixes
    block sizes at n * pi (rounded) instead of drawing labels i.i.d.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    estimators = tuple(e for e in ESTIMATORS if e in set(estimators))
    if not estimators:
        raise ValueError(f"choose at least one estimator from {ESTIMATORS}")
    rule = RhoRule("constant", model.rho) if rho_rule is None else RhoRule.parse(rho_rule)
    rho = rule.rho(n)
    if rule.kind == "power" and not n * rho > np.sqrt(n) * np.log(n) ** 0.5:
        warnings.warn(f"n rho = {n * rho:.1f} is not comfortably above sqrt(n); "
                      "the sparse limit theory may not apply", SparseRegimeWarning, stacklevel=2)
    regime = regime or ("sparse" if rule.kind == "power" else "dense")
    run_model = validate_model(model.B, model.pi, rho, model.rank_tol)
    jobs = [(i, s, run_model, n, estimators, fixed_sizes, regime)
            for i, s in enumerate(spawn_seeds(seed, M))]
    records = pd.DataFrame(_map(jobs, n_jobs)).sort_values("replicate").reset_index(drop=True)
    return ReplicateTable(model=run_model, n=n, rho_rule=rule, M=M, seed=seed,
                          estimators=estimators, fixed_sizes=fixed_sizes, regime=regime,
                          records=records)


# --- comparison with the limit theory ---------------------------------------

# column prefix -> (variance in the summary, subtract the summary bias?)
_STATISTICS = {
    "naive": ("naive_var", False),
    "spectral": ("sigma2", True),
    "spectral_corrected": ("sigma2", False),
    "recovered_naive": ("naive_var", False),
    "recovered_spectral": ("sigma2", True),
    "recovered_spectral_corrected": ("sigma2", False),
}


@dataclass
class CltReport:
    entries: pd.DataFrame
    recovery_rate: float | None
    d_hat_histogram: dict
    excluded: int
    M: int

    def entry(self, statistic: str, k: int, l: int) -> pd.Series:
        """Row for a statistic and a 1-based block pair."""
        e = self.entries
        return e[(e.statistic == statistic) & (e.k == k) & (e.l == l)].iloc[0]

    def to_dict(self) -> dict:
        return {
            "M": self.M, "excluded": self.excluded, "recovery_rate": self.recovery_rate,
            "d_hat_histogram": self.d_hat_histogram,
            "entries": json.loads(self.entries.to_json(orient="records")),
        }

    def save(self, directory, stem: str = "clt_report") -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / f"{stem}.json").write_text(json.dumps(self.to_dict(), indent=2))
        self.entries.to_csv(directory / f"{stem}.csv", index=False)
        return directory


def clt_report(table: ReplicateTable, summary: AsymptoticSummary) -> CltReport:
    """Standardize each recorded estimate as n sqrt(rho) (B_hat - B - bias/(n rho))
    and compare its spread with the matching limiting variance.

    Bias-corrected columns already had the plug-in bias removed and are only
    centred at B. KS distances are computed after studentizing with the
    sample mean and standard deviation.
    """
    expected = "sparse" if table.rho_rule.kind == "power" else "dense"
    if summary.regime != expected:
        raise MismatchedRegime(f"table is {expected} but summary is {summary.regime}")
    recs = table.ok()
    n, rho = table.n, table.rho
    scale = n * np.sqrt(rho)
    B = table.model.B
    rows = []
    for prefix, (var_name, subtract_bias) in _STATISTICS.items():
        for k, l in _vech_pairs(table.model.K):
            col = f"{prefix}_{k + 1}{l + 1}"
            if col not in recs:
                continue
            x = recs[col].to_numpy(dtype=np.float64)
            x = x[np.isfinite(x)]
            bias = summary.theta[k, l] / (n * rho) if subtract_bias else 0.0
            z = scale * (x - B[k, l] - bias)
            theory = float(getattr(summary, var_name)[k, l])
            row = {"statistic": prefix, "k": k + 1, "l": l + 1, "M": int(z.size),
                   "mean": float(np.mean(z)) if z.size else np.nan,
                   "var": float(np.var(z, ddof=1)) if z.size > 1 else np.nan,
                   "theory_var": theory, "theory_bias": float(summary.theta[k, l]),
                   "skipped": theory <= 0 or z.size < 2}
            row["mean_se"] = float(np.sqrt(row["var"] / z.size)) if z.size > 1 else np.nan
            row["raw_mean"] = float(np.mean(scale * (x - B[k, l]))) if z.size else np.nan
            if row["skipped"]:
                row.update(var_ratio=np.nan, ks=np.nan)
            else:
                row["var_ratio"] = row["var"] / theory
                sd = np.sqrt(row["var"])
                row["ks"] = float(sps.kstest((z - row["mean"]) / sd, "norm").statistic) if sd > 0 \
                    else 1.0
            row["ks_threshold"] = 1.36 / np.sqrt(max(z.size, 1))
            rows.append(row)
    recovery = float(recs["recovered"].mean()) if "recovered" in recs else None
    hist = {}
    if "d_hat" in recs:
        hist = {int(k): int(v) for k, v in recs["d_hat"].value_counts().sort_index().items()}
    return CltReport(entries=pd.DataFrame(rows), recovery_rate=recovery, d_hat_histogram=hist,
                     excluded=int(len(table.records) - len(recs)), M=table.M)


# --- Erdos-Renyi and recovery experiments -----------------------------------


def er_spectral_estimate(A) -> float:
    """lambda_hat (1^T u_hat)^2 / n^2 from the top eigenpair of A."""
    A = np.asarray(A, dtype=np.float64)
    with warnings.catch_warnings():
        # a tie below the top eigenvalue does not affect the estimate
        warnings.simplefilter("ignore", ModulusTie)
        emb = top_eigenpairs(A, 1, check_input=False)
    u = emb.U_hat[:, 0]
    return float(emb.eigenvalues[0] * u.sum() ** 2 / A.shape[0] ** 2)


def _er_job(job):
    seed, p, n = job
    model = validate_model([[p]], [1.0])
    rng = as_generator(seed)
    A = sample_adjacency(model, np.zeros(n, dtype=np.int64), rng).A
    return er_spectral_estimate(A)


def er_replicates(p: float, n: int, M: int, seed: int = 0, n_jobs: int = 1) -> np.ndarray:
    """Spectral estimates of p from ``M`` Erdos-Renyi graphs."""
    jobs = [(s, p, n) for s in spawn_seeds(seed, M)]
    if n_jobs <= 1:
        return np.array([_er_job(j) for j in jobs])
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return np.array(list(pool.map(_er_job, jobs)))


def recovery_curve(model: ModelSpec, n_list, M: int, seed: int = 0, fixed_sizes: bool = False,
                   n_jobs: int = 1) -> pd.DataFrame:
    """Exact-recovery rate and median 2->infinity residual for each n."""
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing")
    rows = []
    for i, n in enumerate(n_list):
        table = run_replicates(model, n, M, estimators=("recovered", "residual"),
                               seed=spawn_seeds(seed, len(n_list))[i], fixed_sizes=fixed_sizes,
                               n_jobs=n_jobs)
        recs = table.ok()
        rows.append({
            "n": n, "M": len(recs),
            "recovery_rate": float(recs["recovered"].mean()),
            "mean_agreement": float(recs["agreement"].mean()),
            "median_residual": float(recs["residual"].median()),
        })
    return pd.DataFrame(rows)


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])
