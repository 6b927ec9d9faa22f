"""Command-line interface.

Each subcommand reads an optional JSON config (``--config``), lets explicit
flags override its keys, validates the merged config against a schema that
rejects unknown keys, and writes its outputs plus ``manifest.json`` under
``--out``.

Exit codes: 0 success, 1 runtime or estimation error, 2 usage or config
error (including unreadable input files).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import jsonschema
import numpy as np

from ._validation import check_adjacency, check_labels
from .asymptotics import asymptotic_summary, mse_at_model, mse_surface, plug_in_theta
from .exceptions import BlockestError, ModelError
from .io import read_graph, read_labels, write_dense_csv, write_edgelist, write_embedding, write_labels
from .likelihood import FAMILIES, binomial_counts, naive_mle, rank1_mle_2block, rank2_mle_3block
from .model import sample_graph, validate_model
from .montecarlo import (RhoRule, config_hash, default_threads, recovery_curve, run_replicates,
                         clt_report, loglog_slope)
from .spectral import (align_blocks, cluster_embedding, estimate_rank, plug_in_latent_positions,
                       rank_threshold, relabel, spectral_block_estimate, top_eigenpairs)

logger = logging.getLogger("blockest")


class UsageError(Exception):
    """Bad config or arguments; exit code 2."""


_NUM = {"type": "number"}
_MODEL = {
    "type": "object",
    "properties": {
        "B": {"type": "array", "items": {"type": "array", "items": _NUM}, "minItems": 1},
        "pi": {"type": "array", "items": _NUM, "minItems": 1},
        "rho": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    },
    "required": ["B", "pi"],
    "additionalProperties": False,
}
_RHO_RULE = {
    "type": "object",
    "properties": {"kind": {"enum": ["constant", "power"]}, "value": _NUM},
    "required": ["kind", "value"],
    "additionalProperties": False,
}
_POS_INT = {"type": "integer", "minimum": 1}
_SEED = {"type": "integer", "minimum": 0}


def _schema(properties: dict, required: list) -> dict:
    props = {"out": {"type": "string"}, "threads": _POS_INT, **properties}
    return {"type": "object", "properties": props, "required": required,
            "additionalProperties": False}


SCHEMAS = {
    "simulate": _schema({"model": _MODEL, "n": _POS_INT, "seed": _SEED,
                         "fixed_sizes": {"type": "boolean"}, "dense": {"type": "boolean"}},
                        ["model", "n", "out"]),
    "estimate": _schema({
        "graph": {"type": "string"}, "labels": {"type": ["string", "null"]},
        "n_blocks": {"type": ["integer", "null"], "minimum": 1},
        "rank": {"oneOf": [{"const": "auto"}, _POS_INT]},
        "rho": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "regime": {"enum": ["dense", "sparse"]},
        "estimators": {"type": "array", "items": {"enum": ["naive", "spectral", "mle"]}},
        "seed": _SEED, "save_embedding": {"type": "boolean"}}, ["graph"]),
    "verify-clt": _schema({
        "model": _MODEL, "n": _POS_INT, "M": _POS_INT, "seed": _SEED, "rho_rule": _RHO_RULE,
        "regime": {"enum": ["dense", "sparse"]},
        "estimators": {"type": "array",
                       "items": {"enum": ["naive", "spectral", "recovered", "mle", "rank",
                                          "residual"]}},
        "fixed_sizes": {"type": "boolean"}, "squared_factor": {"type": "boolean"}},
        ["model", "n", "M", "out"]),
    "mse-surface": _schema({
        "family": {"enum": ["2block", "3block", "model"]},
        "resolution": _POS_INT,
        "pi": {"type": "array", "items": _NUM},
        "grid": {"type": "array", "minItems": 2, "maxItems": 2,
                 "items": {"type": "array", "items": _NUM, "minItems": 1}},
        "B": {"type": "array", "items": {"type": "array", "items": _NUM}}}, ["out"]),
    "recovery-curve": _schema({
        "model": _MODEL, "n_list": {"type": "array", "items": _POS_INT, "minItems": 1},
        "M": _POS_INT, "seed": _SEED, "fixed_sizes": {"type": "boolean"}},
        ["model", "n_list", "M", "out"]),
    "rank-select": _schema({
        "graph": {"type": "string"}, "model": _MODEL, "n": _POS_INT, "M": _POS_INT,
        "seed": _SEED, "fixed_sizes": {"type": "boolean"}}, []),
}


def _package_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def load_config(command: str, path, overrides: dict) -> dict:
    """Merge a JSON config file with flag overrides and validate the result."""
    config = {}
    if path is not None:
        try:
            config = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise UsageError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(config, dict):
            raise UsageError("config must be a JSON object")
    config.update({k: v for k, v in overrides.items() if v is not None})
    try:
        jsonschema.validate(config, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        where = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise UsageError(f"config error at {where}: {exc.message}") from exc
    return config


def _model(cfg: dict):
    m = cfg["model"]
    try:
        return validate_model(m["B"], m["pi"], m.get("rho", 1.0))
    except ModelError as exc:
        raise UsageError(f"invalid model: {exc}") from exc


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, cfg: dict, **extra) -> None:
    # where the output goes and how many workers ran do not change results
    hashed = {k: v for k, v in cfg.items() if k not in ("out", "threads")}
    manifest = {"command": command, "version": _package_version(), "config": cfg,
                "config_hash": config_hash(hashed), **extra}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_jsonable))


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, default=_jsonable)


def _read_input(path):
    try:
        return read_graph(path)
    except FileNotFoundError as exc:
        raise UsageError(f"graph file not found: {path}") from exc


# --- commands ----------------------------------------------------------------


def cmd_simulate(cfg: dict) -> dict:
    model = _model(cfg)
    seed = cfg.get("seed", 0)
    out = _out_dir(cfg)
    g = sample_graph(model, cfg["n"], seed=seed, fixed=cfg.get("fixed_sizes", False))
    write_edgelist(out / "graph.edges", g.A, model.K, seed)
    write_labels(out / "labels.txt", g.tau)
    files = ["graph.edges", "labels.txt"]
    if cfg.get("dense", False):
        write_dense_csv(out / "adjacency.csv", g.A)
        files.append("adjacency.csv")
    _write_manifest(out, "simulate", cfg, files=files, n_edges=int(np.triu(g.A).sum()))
    return {"out": str(out), "files": files}


def _rank_mle(K, d, stats, rho, B_init):
    if K == 2 and d == 1:
        name, fit = "rank1_2block", rank1_mle_2block
    elif K == 3 and d == 2:
        name, fit = "rank2_3block", rank2_mle_3block
    else:
        return None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = fit(stats, rho, init=FAMILIES[name].init_from(B_init))
    out = res.to_dict()
    out["warnings"] = [str(w.message) for w in caught]
    return out


def cmd_estimate(cfg: dict) -> dict:
    A, K_file, _ = _read_input(cfg["graph"])
    try:
        A = check_adjacency(A, binary=False)
    except ValueError as exc:
        raise UsageError(f"{cfg['graph']}: {exc}") from exc
    n = A.shape[0]
    truth = None
    if cfg.get("labels"):
        try:
            truth = check_labels(read_labels(cfg["labels"]), n=n)
        except FileNotFoundError as exc:
            raise UsageError(f"labels file not found: {cfg['labels']}") from exc
    K = cfg.get("n_blocks") or K_file or (int(truth.max()) + 1 if truth is not None else None)
    if K is None:
        raise UsageError("number of blocks unknown: pass --n-blocks")
    rho = cfg.get("rho", 1.0)
    regime = cfg.get("regime", "dense")
    estimators = cfg.get("estimators", ["naive", "spectral", "mle"])

    d_hat = estimate_rank(A, check_input=False)
    rank = cfg.get("rank", "auto")
    d = d_hat if rank == "auto" else rank
    if d < 1:
        raise BlockestError("no eigenvalue exceeds the rank threshold; pass --rank")
    emb = top_eigenpairs(A, d, check_input=False)
    clus = cluster_embedding(emb, K, seed=cfg.get("seed", 0))
    tau_hat = clus.tau_hat
    bundle = {"n": n, "K": K, "rho": rho, "regime": regime, "d": d, "d_hat": d_hat,
              "rank_threshold": rank_threshold(A), "eigenvalues": emb.eigenvalues}
    # report everything in the truth's label order when truth is known
    perm = np.arange(K)
    if truth is not None:
        psi, agreement = align_blocks(tau_hat, truth, K)
        perm = psi
        bundle.update(psi=psi, agreement=agreement, recovered=bool(agreement == 1.0))
        bundle["tau_hat"] = relabel(tau_hat, psi) + 1
    else:
        bundle["tau_hat"] = tau_hat + 1
    reorder = np.ix_(perm, perm)
    stats = binomial_counts(A, tau_hat, K, check_input=False)
    if "naive" in estimators:
        bundle["B_naive"] = naive_mle(stats, rho)[reorder]
    B_s = spectral_block_estimate(emb, clus, rho)
    if "spectral" in estimators:
        B_hat, pi_hat, nu_hat = plug_in_latent_positions(emb, clus, rho)
        bundle["B_spectral"] = B_s[reorder]
        try:
            theta = plug_in_theta(B_hat, pi_hat, nu_hat, regime)
            bundle["theta_hat"] = theta[reorder]
            bundle["B_spectral_corrected"] = (B_s - theta / (n * rho))[reorder]
        except ArithmeticError as exc:
            bundle["theta_hat"] = None
            bundle["B_spectral_corrected"] = None
            bundle["notes"] = [f"bias correction skipped: {exc}"]
        bundle["pi_hat"] = pi_hat[perm]
    if "mle" in estimators:
        mle = _rank_mle(K, d, stats, rho, B_s)
        if mle is not None:
            mle["B_hat"] = np.asarray(mle["B_hat"])[reorder]
        bundle["B_mle"] = mle
    if "out" in cfg:
        out = _out_dir(cfg)
        (out / "estimate.json").write_text(_dump(bundle))
        np.savetxt(out / "labels_hat.txt", bundle.pop("tau_hat"), fmt="%d")
        if cfg.get("save_embedding", False):
            write_embedding(out / "embedding", emb, d_hat=d_hat, threshold=bundle["rank_threshold"])
        _write_manifest(out, "estimate", cfg)
    return bundle


def cmd_verify_clt(cfg: dict) -> dict:
    model = _model(cfg)
    rule = RhoRule.parse(cfg.get("rho_rule", {"kind": "constant", "value": model.rho}))
    regime = cfg.get("regime", "sparse" if rule.kind == "power" else "dense")
    out = _out_dir(cfg)
    table = run_replicates(model, cfg["n"], cfg["M"], rho_rule=rule,
                           estimators=cfg.get("estimators", ["naive", "spectral"]),
                           seed=cfg.get("seed", 0), fixed_sizes=cfg.get("fixed_sizes", True),
                           regime=regime, n_jobs=cfg.get("threads", default_threads()))
    table.save(out / "replicates")
    summary = asymptotic_summary(table.model, regime, cfg.get("squared_factor", False))
    report = clt_report(table, summary)
    report.save(out)
    _write_manifest(out, "verify-clt", cfg, rho=table.rho, excluded=report.excluded)
    return report.to_dict()


def cmd_mse_surface(cfg: dict) -> dict:
    family = cfg.get("family", "2block")
    out = _out_dir(cfg)
    try:
        if family == "model":
            if "B" not in cfg or "pi" not in cfg:
                raise UsageError("family 'model' needs B and pi")
            df = mse_at_model(cfg["B"], cfg["pi"])
        else:
            df = mse_surface(family, grid=cfg.get("grid"), pi=cfg.get("pi"),
                             resolution=cfg.get("resolution", 33))
    except ModelError as exc:
        raise UsageError(str(exc)) from exc
    df.to_csv(out / "mse_surface.csv", index=False)
    ok = df[df.feasible]
    summary = {"points": int(len(df)), "feasible": int(len(ok))}
    for col in ("ratio_SN", "ratio_SM"):
        vals = ok[col].dropna()
        summary[col] = {"min": float(vals.min()), "max": float(vals.max()),
                        "mean": float(vals.mean())} if len(vals) else None
    (out / "summary.json").write_text(_dump(summary))
    _write_manifest(out, "mse-surface", cfg)
    return summary


def cmd_recovery_curve(cfg: dict) -> dict:
    model = _model(cfg)
    out = _out_dir(cfg)
    try:
        df = recovery_curve(model, cfg["n_list"], cfg["M"], seed=cfg.get("seed", 0),
                            fixed_sizes=cfg.get("fixed_sizes", False),
                            n_jobs=cfg.get("threads", default_threads()))
    except ValueError as exc:
        if isinstance(exc, BlockestError):
            raise
        raise UsageError(str(exc)) from exc
    df.to_csv(out / "recovery_curve.csv", index=False)
    result = {"curve": json.loads(df.to_json(orient="records"))}
    if len(df) > 1 and (df.median_residual > 0).all():
        result["residual_slope"] = loglog_slope(df.n, df.median_residual)
    (out / "summary.json").write_text(_dump(result))
    _write_manifest(out, "recovery-curve", cfg)
    return result


def cmd_rank_select(cfg: dict) -> dict:
    if "graph" in cfg:
        A, _, _ = _read_input(cfg["graph"])
        A = check_adjacency(A, binary=False)
        result = {"n": A.shape[0], "d_hat": estimate_rank(A, check_input=False),
                  "threshold": rank_threshold(A)}
    elif "model" in cfg and "n" in cfg:
        model = _model(cfg)
        table = run_replicates(model, cfg["n"], cfg.get("M", 1), estimators=["rank"],
                               seed=cfg.get("seed", 0), fixed_sizes=cfg.get("fixed_sizes", False),
                               n_jobs=cfg.get("threads", default_threads()))
        d_hat = table.ok()["d_hat"]
        hist = {int(k): int(v) for k, v in d_hat.value_counts().sort_index().items()}
        result = {"n": cfg["n"], "M": table.M, "rank": model.d, "d_hat_histogram": hist,
                  "correct_rate": float((d_hat == model.d).mean())}
    else:
        raise UsageError("rank-select needs a graph file or a model with n")
    if "out" in cfg:
        out = _out_dir(cfg)
        (out / "rank_select.json").write_text(_dump(result))
        _write_manifest(out, "rank-select", cfg)
    return result


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "verify-clt": cmd_verify_clt,
    "mse-surface": cmd_mse_surface,
    "recovery-curve": cmd_recovery_curve,
    "rank-select": cmd_rank_select,
}


# --- argument parsing ----------------------------------------------------------


def _json_arg(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"not valid JSON: {text!r}") from exc


def _rank_arg(text):
    if text == "auto":
        return text
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError("rank must be a positive integer or 'auto'") from exc
    if value < 1:
        raise argparse.ArgumentTypeError("rank must be a positive integer or 'auto'")
    return value


def _csv_list(text):
    return [t for t in text.split(",") if t]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockest",
                                     description="Block-matrix estimation for stochastic block models.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=False):
        p.add_argument("--config", help="JSON config; flags override its keys")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int,
                       help="worker processes (default: $BLOCKEST_THREADS or all cores)")
        if model:
            p.add_argument("--B", type=_json_arg, help="block matrix as JSON")
            p.add_argument("--pi", type=_json_arg, help="block proportions as JSON")
            p.add_argument("--rho", type=float)
        return p

    p = common(sub.add_parser("simulate", help="sample a graph"), model=True)
    p.add_argument("--n", type=int)
    p.add_argument("--fixed-sizes", action="store_const", const=True, dest="fixed_sizes")
    p.add_argument("--dense", action="store_const", const=True, help="also write a dense CSV")

    p = common(sub.add_parser("estimate", help="estimate B from a graph file"))
    p.add_argument("graph", nargs="?", help="edge list, or dense .csv")
    p.add_argument("--labels", help="true labels, 1-based, one per line")
    p.add_argument("--n-blocks", type=int, dest="n_blocks")
    p.add_argument("--rank", type=_rank_arg, help="embedding dimension or 'auto'")
    p.add_argument("--rho", type=float)
    p.add_argument("--regime", choices=["dense", "sparse"])
    p.add_argument("--estimators", type=_csv_list, help="comma list of naive,spectral,mle")
    p.add_argument("--save-embedding", action="store_const", const=True, dest="save_embedding")

    p = common(sub.add_parser("verify-clt", help="replicate and compare with limits"), model=True)
    p.add_argument("--n", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--rho-rule", type=RhoRule.parse, dest="rho_rule",
                   help="constant:VALUE or power:EXPONENT")
    p.add_argument("--regime", choices=["dense", "sparse"])
    p.add_argument("--estimators", type=_csv_list)
    p.add_argument("--squared-factor", action="store_const", const=True, dest="squared_factor")

    p = common(sub.add_parser("mse-surface", help="tabulate asymptotic MSE ratios"))
    p.add_argument("--family", choices=["2block", "3block", "model"])
    p.add_argument("--resolution", type=int)
    p.add_argument("--pi", type=_json_arg)
    p.add_argument("--B", type=_json_arg, help="block matrix for --family model")

    p = common(sub.add_parser("recovery-curve", help="exact recovery against n"), model=True)
    p.add_argument("--n-list", type=lambda s: [int(t) for t in _csv_list(s)], dest="n_list")
    p.add_argument("--M", type=int)

    p = common(sub.add_parser("rank-select", help="estimate rank(B)"), model=True)
    p.add_argument("graph", nargs="?")
    p.add_argument("--n", type=int)
    p.add_argument("--M", type=int)
    return parser


_MODEL_FLAGS = ("B", "pi", "rho")


def _overrides(args) -> dict:
    values = {k: v for k, v in vars(args).items()
              if k not in ("command", "config", "verbose") and v is not None}
    if args.command in ("simulate", "verify-clt", "recovery-curve", "rank-select"):
        model = {k: values.pop(k) for k in _MODEL_FLAGS if k in values}
        if model:
            base = {}
            if args.config:
                try:
                    base = json.loads(Path(args.config).read_text()).get("model", {})
                except (OSError, ValueError, AttributeError):
                    base = {}
            values["model"] = {**base, **model}
    if "rho_rule" in values:
        values["rho_rule"] = values["rho_rule"].to_dict()
    return values


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.command, args.config, _overrides(args))
        result = COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"blockest {args.command}: {exc}", file=sys.stderr)
        return 2
    except (BlockestError, ArithmeticError, ValueError, OSError) as exc:
        print(f"blockest {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(_dump(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
