"""Command-line entry point wiring the pipeline end to end.

Every command resolves its configuration (flags win over an optional TOML
config file), writes a run manifest before any artifact, and prints
progress to stderr only. Outputs are byte-deterministic for identical
invocations. Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, audit, evaluation, plots
from .data import (
    CROP_SCHEMA,
    MARKET_SCHEMA,
    DataMatrix,
    PartitionSpec,
    generate_crop_dataset,
    generate_synthetic_market,
    load_csv,
    partition_markets,
    save_csv,
)
from .errors import AgriShareError, FingerprintMismatch
from .evaluation import (
    PowerConfig,
    UtilityConfig,
    aggregated_cluster_model,
    aggregated_views,
    median_by_epsilon,
    power_analysis,
    power_sweep,
    table4_experiment,
    utility_accuracy,
    utility_sweep,
    write_csv,
)
from .federated import accuracy_vs_epsilon_fl, personalized_training
from .ldp import (
    allocate_epsilon,
    load_noisy_csv,
    load_transformed_csv,
    privatize,
    save_noisy_csv,
    save_transformed_csv,
)
from .models import TrainConfig
from .pca import load_model, pca_fit, pca_transform, project_rows, save_model
from .pipeline import PipelineConfig, build_pipeline
from .sandbox import (
    AggregatedStore,
    ClusterModel,
    ParticipantShare,
    kmeans_fit,
    load_store,
    recommend_collaborators,
    market_similarity_distribution,
    market_similarity_profile,
    recommendation_to_json,
    save_store,
    stacked_rows,
    submit_share,
)

SCHEMAS = {"crop": CROP_SCHEMA, "market": MARKET_SCHEMA}


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def hash_file(path) -> str:
    h = hashlib.blake2b(digest_size=8)
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _json_dump(doc, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def write_manifest(command: str, cfg: dict, seeds, inputs: list, manifest_path) -> None:
    """Run manifest, always written before the artifacts it describes."""
    doc = {
        "command": command,
        "config": {k: cfg[k] for k in sorted(cfg)},
        "seeds": list(seeds),
        "input_hashes": {str(p): hash_file(p) for p in sorted(str(x) for x in inputs)},
        "tool_version": __version__,
    }
    _json_dump(doc, manifest_path)


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge CLI values, TOML config file values and built-in defaults."""
    file_cfg = {}
    if getattr(args, "config", None):
        import tomli
        with open(args.config, "rb") as fh:
            file_cfg = tomli.load(fh)
    out = {}
    for key, default in defaults.items():
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            out[key] = cli_val
        elif key in file_cfg:
            out[key] = file_cfg[key]
        else:
            out[key] = default
    return out


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise AgriShareError(f"cannot parse number list {text!r}") from None


def _seed_list(cfg) -> list[int]:
    return [cfg["seed"] + i for i in range(cfg["n_seeds"])]


def _pipeline_from_cfg(cfg: dict):
    data = load_csv(cfg["input"], SCHEMAS[cfg["schema"]])
    pipe_cfg = PipelineConfig(
        n_markets=cfg["markets"],
        global_fraction=cfg["global_fraction"],
        k=cfg["k"],
        clusters=cfg["clusters"],
        partition_seed=cfg["partition_seed"],
    )
    return data, build_pipeline(data, pipe_cfg)


_TRAIN_DEFAULTS_DOC = {
    "logreg": "full-batch GD, lr 0.1, 500 epochs, l2 1e-4",
    "gnb": "variance smoothing 1e-9 x max feature variance",
    "svm": "one-vs-rest hinge subgradient, lr 0.2 with 1/t-style decay, "
           "batch 32, 500 epochs, l2 1e-3",
    "mlp": "one hidden layer of 32 relu units, lr 0.01, batch 32",
}

_PIPELINE_DEFAULTS = {
    "schema": "crop",
    "markets": 5,
    "global_fraction": 1.0 / 3.0,
    "k": 2,
    "clusters": 4,
    "partition_seed": 11,
}


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="labeled dataset CSV")
    p.add_argument("--schema", choices=sorted(SCHEMAS))
    p.add_argument("--markets", type=int, help="number of simulated markets")
    p.add_argument("--global-fraction", dest="global_fraction", type=float)
    p.add_argument("--k", type=int, help="number of retained components")
    p.add_argument("--clusters", type=int)
    p.add_argument("--partition-seed", dest="partition_seed", type=int)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = _resolve(args, {"dataset": "crop", "rows": 100, "seed": 7, "out": None})
    out = Path(cfg["out"])
    write_manifest("gen-data", cfg, [cfg["seed"]], [], out.with_suffix(out.suffix + ".manifest.json"))
    if cfg["dataset"] == "crop":
        data = generate_crop_dataset(n_per_class=cfg["rows"], seed=cfg["seed"])
    else:
        data = generate_synthetic_market(n=cfg["rows"], seed=cfg["seed"])
    save_csv(data, out)
    _log(f"wrote {data.n} rows to {out}")
    return 0


def cmd_partition(args) -> int:
    cfg = _resolve(args, {"input": None, "schema": "crop", "markets": 5,
                          "global_fraction": 1.0 / 3.0, "seed": 11,
                          "stratify": False, "out_dir": None})
    out_dir = Path(cfg["out_dir"])
    data = load_csv(cfg["input"], SCHEMAS[cfg["schema"]])
    write_manifest("partition", cfg, [cfg["seed"]], [cfg["input"]], out_dir / "run_manifest.json")
    spec = PartitionSpec(n_markets=cfg["markets"], global_fraction=cfg["global_fraction"],
                         seed=cfg["seed"], stratify_by_label=cfg["stratify"])
    global_part, markets = partition_markets(data, spec)
    save_csv(global_part, out_dir / "global.csv")
    for i, market in enumerate(markets):
        save_csv(market, out_dir / f"market_{i}.csv")
    _log(f"global {global_part.n} rows; markets {[m.n for m in markets]}")
    return 0


def cmd_train_pca(args) -> int:
    cfg = _resolve(args, {"input": None, "schema": "crop", "k": 2, "out": None})
    out = Path(cfg["out"])
    data = load_csv(cfg["input"], SCHEMAS[cfg["schema"]])
    write_manifest("train-pca", cfg, [], [cfg["input"]], out.with_suffix(out.suffix + ".manifest.json"))
    model = pca_fit(data, cfg["k"])
    save_model(model, out)
    _log(f"fitted k={model.k} model, fingerprint {model.fingerprint}")
    return 0


def cmd_transform(args) -> int:
    cfg = _resolve(args, {"model": None, "input": None, "schema": "crop", "out": None})
    out = Path(cfg["out"])
    model = load_model(cfg["model"])
    data = load_csv(cfg["input"], SCHEMAS[cfg["schema"]])
    write_manifest("transform", cfg, [], [cfg["model"], cfg["input"]],
                   out.with_suffix(out.suffix + ".manifest.json"))
    tm = pca_transform(model, data)
    save_transformed_csv(tm, out)
    _log(f"projected {tm.n} rows into {tm.k} components")
    return 0


def cmd_privatize(args) -> int:
    cfg = _resolve(args, {"model": None, "input": None, "epsilon": 25.0,
                          "seed": 0, "out": None})
    if cfg["epsilon"] <= 0:
        raise AgriShareError("epsilon must be positive")
    out = Path(cfg["out"])
    model = load_model(cfg["model"])
    tm = load_transformed_csv(cfg["input"], expected_fingerprint=model.fingerprint)
    write_manifest("privatize", cfg, [cfg["seed"]], [cfg["model"], cfg["input"]],
                   out.with_suffix(out.suffix + ".manifest.json"))
    budget = allocate_epsilon(cfg["epsilon"], model.sensitivities)
    share = privatize(tm, model.sensitivities, budget, np.random.default_rng(cfg["seed"]))
    save_noisy_csv(share, out)
    _log(f"privatized {share.n} rows at epsilon={share.epsilon}")
    return 0


def cmd_aggregate(args) -> int:
    cfg = _resolve(args, {"model": None, "shares": None, "ids": None, "out_dir": None})
    shares = list(cfg["shares"])
    ids = list(cfg["ids"]) if cfg["ids"] else [Path(s).stem for s in shares]
    if len(ids) != len(shares):
        raise AgriShareError("--ids must match --shares in length")
    out_dir = Path(cfg["out_dir"])
    model = load_model(cfg["model"])
    write_manifest("aggregate", {**cfg, "shares": shares, "ids": ids}, [],
                   [cfg["model"], *shares], out_dir / "run_manifest.json")
    with audit.guard(audit.RAW_READ):
        store = AggregatedStore(model_fingerprint=model.fingerprint)
        for pid, path in zip(ids, shares):
            submit_share(store, ParticipantShare(pid, load_noisy_csv(path)))
        save_store(store, out_dir)
    _log(f"aggregated {store.total_rows} rows from {len(ids)} participants")
    return 0


def cmd_cluster(args) -> int:
    cfg = _resolve(args, {"store": None, "clusters": 4, "seed": 3, "out": None,
                          "plot": None})
    out = Path(cfg["out"])
    with audit.guard(audit.RAW_READ):
        store = load_store(cfg["store"])
        inputs = sorted(str(p) for p in Path(cfg["store"]).glob("*.csv"))
        write_manifest("cluster", cfg, [cfg["seed"]], inputs,
                       out.with_suffix(out.suffix + ".manifest.json"))
        cm = kmeans_fit(store, cfg["clusters"], cfg["seed"])
        doc = {"centroids": cm.centroids.tolist(), "c": cm.c, "inertia": cm.inertia,
               "seed": cm.seed, "fingerprint": store.model_fingerprint}
        _json_dump(doc, out)
        if cfg["plot"]:
            rows, _ = stacked_rows(store)
            from .sandbox import assign_rows
            plots.render_clusters(rows, assign_rows(cm, rows), cm.centroids, cfg["plot"])
    _log(f"fitted {cm.c} clusters, inertia {cm.inertia:.3f}")
    return 0


def _load_cluster_model(path, expected_fingerprint=None) -> ClusterModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if expected_fingerprint is not None and doc.get("fingerprint") != expected_fingerprint:
        raise FingerprintMismatch(f"{path}: cluster model built on a different store")
    return ClusterModel(centroids=np.array(doc["centroids"], dtype=np.float64),
                        c=int(doc["c"]), inertia=float(doc["inertia"]), seed=int(doc["seed"]))


def cmd_recommend(args) -> int:
    cfg = _resolve(args, {"store": None, "cluster_model": None, "model": None,
                          "profile": None, "m": 5, "out": None})
    out = Path(cfg["out"])
    model = load_model(cfg["model"])
    profile = np.array(_parse_float_list(cfg["profile"]))
    if profile.shape != (model.d,):
        raise AgriShareError(f"profile needs {model.d} values, got {len(profile)}")
    with audit.guard(audit.RAW_READ):
        store = load_store(cfg["store"])
        if store.model_fingerprint != model.fingerprint:
            raise FingerprintMismatch("store and model fingerprints differ")
        cm = _load_cluster_model(cfg["cluster_model"], store.model_fingerprint)
        inputs = [cfg["model"], cfg["cluster_model"]] + sorted(
            str(p) for p in Path(cfg["store"]).glob("*.csv"))
        write_manifest("recommend", cfg, [], inputs,
                       out.with_suffix(out.suffix + ".manifest.json"))
        query = project_rows(model, profile)[0]
        rec = recommend_collaborators(store, cm, query, cfg["m"])
        _json_dump(recommendation_to_json(rec), out)
    _log(f"label {rec.query_label}; {len(rec.neighbors)} neighbors")
    return 0


def cmd_similarity(args) -> int:
    cfg = _resolve(args, {"store": None, "cluster_model": None, "a": None, "b": None,
                          "mode": "profile", "out": None})
    out = Path(cfg["out"])
    with audit.guard(audit.RAW_READ):
        store = load_store(cfg["store"])
        inputs = sorted(str(p) for p in Path(cfg["store"]).glob("*.csv"))
        cm = None
        if cfg["mode"] == "profile" and cfg["cluster_model"]:
            cm = _load_cluster_model(cfg["cluster_model"], store.model_fingerprint)
            inputs.append(cfg["cluster_model"])
        write_manifest("similarity", cfg, [], inputs,
                       out.with_suffix(out.suffix + ".manifest.json"))
        if cfg["mode"] == "profile":
            value = market_similarity_profile(store, cm, cfg["a"], cfg["b"])
        else:
            value = market_similarity_distribution(store, cfg["a"], cfg["b"])
    doc = {"a": cfg["a"], "b": cfg["b"], "mode": cfg["mode"], "distance": value}
    _json_dump(doc, out)
    print(json.dumps(doc, sort_keys=True))
    return 0


def cmd_fedtrain(args) -> int:
    cfg = _resolve(args, {**_PIPELINE_DEFAULTS, "input": None, "epsilon": 25.0,
                          "initiator": "market_0", "m": 3, "mode": "profile",
                          "rounds": 20, "local_epochs": 5, "lr": 0.01,
                          "batch_size": 32, "hidden": 32, "seed": 0, "out_dir": None})
    out_dir = Path(cfg["out_dir"])
    data, pipe = _pipeline_from_cfg(cfg)
    write_manifest("fedtrain",
                   {**cfg, "architecture_note": "one hidden relu layer is an assumption; "
                                                "override with --hidden"},
                   [cfg["seed"]], [cfg["input"]], out_dir / "run_manifest.json")
    store = pipe.make_store(cfg["epsilon"], cfg["seed"])
    raw = {pid: pipe.raw_arrays(pid) for pid in pipe.market_ids}
    train_cfg = TrainConfig(learning_rate=cfg["lr"], epochs=cfg["local_epochs"],
                            batch_size=cfg["batch_size"], seed=cfg["seed"], l2=0.0)
    params, reports, collaborators = personalized_training(
        store, cfg["initiator"], raw, cfg["m"], cfg["mode"],
        rounds=cfg["rounds"], local_epochs=cfg["local_epochs"], train_cfg=train_cfg,
        hidden=cfg["hidden"])
    _json_dump({"shape": list(params.shape), "weights": params.weights.tolist(),
                "activation": params.activation, "collaborators": collaborators},
               out_dir / "fed_model.json")
    rows = [{"round": r.round, "accuracy": r.global_eval_accuracy,
             **{f"loss_{cid}": loss for cid, loss in sorted(r.per_client_loss.items())}}
            for r in reports]
    columns = ["round", "accuracy"] + [f"loss_{cid}" for cid in sorted(collaborators)]
    write_csv(rows, columns, out_dir / "rounds.csv")
    plots.render_round_accuracy(reports, out_dir / "rounds.png")
    _log(f"collaborators {collaborators}; final accuracy {reports[-1].global_eval_accuracy:.4f}")
    return 0


def cmd_eval_power(args) -> int:
    cfg = _resolve(args, {**_PIPELINE_DEFAULTS,
                          "global_fraction": evaluation.POWER_SWEEP_GLOBAL_FRACTION,
                          "input": None, "epsilon": 25.0, "fpr": 0.05,
                          "case_market": "market_0", "n_control": 200, "n_case": 200,
                          "seed": 0, "out": None})
    out = Path(cfg["out"])
    data, pipe = _pipeline_from_cfg(cfg)
    write_manifest("eval-power", cfg, [cfg["seed"]], [cfg["input"]],
                   out.with_suffix(out.suffix + ".manifest.json"))
    share = pipe.make_share(cfg["case_market"], cfg["epsilon"], cfg["seed"])
    report = power_analysis(share, pipe.transformed[cfg["case_market"]],
                            pipe.global_transformed,
                            PowerConfig(fpr=cfg["fpr"], n_control=cfg["n_control"],
                                        n_case=cfg["n_case"], seed=cfg["seed"]))
    _json_dump({"epsilon": report.epsilon, "threshold": report.threshold,
                "power": report.power, "n_control": report.n_control,
                "n_case": report.n_case}, out)
    _log(f"power {report.power:.4f} at epsilon {report.epsilon}")
    return 0


def cmd_eval_utility(args) -> int:
    cfg = _resolve(args, {**_PIPELINE_DEFAULTS, "input": None, "epsilon": 25.0,
                          "classifier": "logreg", "seed": 0,
                          "train_on_noisy": False, "out": None})
    out = Path(cfg["out"])
    data, pipe = _pipeline_from_cfg(cfg)
    write_manifest("eval-utility", {**cfg, "train_defaults": _TRAIN_DEFAULTS_DOC},
                   [cfg["seed"]], [cfg["input"]],
                   out.with_suffix(out.suffix + ".manifest.json"))
    cm = aggregated_cluster_model(pipe)
    clean, noisy = aggregated_views(pipe, cfg["epsilon"], cfg["seed"])
    report = utility_accuracy(clean, noisy, cm, cfg["classifier"],
                              UtilityConfig(seed=cfg["seed"],
                                            train_on_noisy=cfg["train_on_noisy"]))
    _json_dump({"epsilon": report.epsilon, "classifier": report.classifier,
                "accuracy_noisy": report.accuracy_noisy,
                "accuracy_clean": report.accuracy_clean}, out)
    _log(f"{report.classifier}: noisy {report.accuracy_noisy:.4f} clean {report.accuracy_clean:.4f}")
    return 0


def cmd_table4(args) -> int:
    cfg = _resolve(args, {**_PIPELINE_DEFAULTS, "input": None, "seed": 0,
                          "n_seeds": 5, "eps_logreg": 25.0, "eps_gnb": 35.0,
                          "eps_svm": 35.0, "out_dir": None})
    out_dir = Path(cfg["out_dir"])
    seeds = _seed_list(cfg)
    data, pipe = _pipeline_from_cfg(cfg)
    write_manifest("table4", {**cfg, "train_defaults": _TRAIN_DEFAULTS_DOC}, seeds,
                   [cfg["input"]], out_dir / "run_manifest.json")
    epsilons = {"logreg": cfg["eps_logreg"], "gnb": cfg["eps_gnb"], "svm": cfg["eps_svm"]}
    reports, gap, runs = table4_experiment(data, pipe, seeds, epsilons)
    write_csv([{"classifier": r.classifier,
                "acc_centralized": r.accuracy_clean,
                "acc_aggregated": r.accuracy_noisy} for r in reports],
              ["classifier", "acc_centralized", "acc_aggregated"], out_dir / "table4.csv")
    write_csv(runs, ["classifier", "seed", "epsilon", "acc_centralized", "acc_aggregated"],
              out_dir / "table4_runs.csv")
    _json_dump({"average_gap_pp": gap}, out_dir / "gap.json")
    plots.render_table4(reports, out_dir / "table4.png")
    for r in reports:
        _log(f"{r.classifier}: centralized {r.accuracy_clean * 100:.1f} "
             f"aggregated {r.accuracy_noisy * 100:.1f}")
    _log(f"average gap {gap:.2f} pp")
    return 0


def cmd_sweep(args) -> int:
    cfg = _resolve(args, {**_PIPELINE_DEFAULTS,
                          "global_fraction": None,
                          "input": None, "experiment": "both",
                          "epsilons": "10,15,20,25,30,35,40",
                          "seed": 0, "n_seeds": 11, "fpr": 0.05, "jobs": 1,
                          "train_on_noisy": True,
                          "initiator": "market_0", "m": 3, "mode": "profile",
                          "rounds": 20, "local_epochs": 5, "lr": 0.01,
                          "batch_size": 32, "out_dir": None})
    if cfg["global_fraction"] is None:
        # federated sweeps need real client datasets; the privacy sweeps
        # operate at the sparse-share point where the power signal lives
        cfg["global_fraction"] = (1.0 / 3.0 if cfg["experiment"] == "fl"
                                  else evaluation.POWER_SWEEP_GLOBAL_FRACTION)
    out_dir = Path(cfg["out_dir"])
    epsilons = _parse_float_list(cfg["epsilons"]) if isinstance(cfg["epsilons"], str) \
        else [float(e) for e in cfg["epsilons"]]
    seeds = _seed_list(cfg)
    data, pipe = _pipeline_from_cfg(cfg)
    write_manifest("sweep", cfg, seeds, [cfg["input"]], out_dir / "run_manifest.json")

    def run_eps(kind, eps):
        if kind == "power":
            return power_sweep(pipe, [eps], seeds, PowerConfig(fpr=cfg["fpr"]))
        if kind == "utility":
            return utility_sweep(pipe, [eps], seeds, train_on_noisy=cfg["train_on_noisy"])
        return accuracy_vs_epsilon_fl(
            pipe, [eps], seeds, initiator=cfg["initiator"], m=cfg["m"], mode=cfg["mode"],
            rounds=cfg["rounds"], local_epochs=cfg["local_epochs"],
            train_cfg=TrainConfig(learning_rate=cfg["lr"], epochs=cfg["local_epochs"],
                                  batch_size=cfg["batch_size"], seed=cfg["seed"], l2=0.0))

    wanted = {"power": ("power", "both"), "utility": ("utility", "both"), "fl": ("fl",)}
    for kind, experiments in wanted.items():
        if cfg["experiment"] not in experiments:
            continue
        if cfg["jobs"] > 1:
            with ThreadPoolExecutor(max_workers=cfg["jobs"]) as pool:
                chunks = list(pool.map(lambda e: run_eps(kind, e), epsilons))
        else:
            chunks = [run_eps(kind, e) for e in epsilons]
        rows = [r for chunk in chunks for r in chunk]
        if kind == "power":
            rows.sort(key=lambda r: (r["epsilon"], r["seed"]))
            write_csv(rows, ["epsilon", "seed", "threshold", "power"],
                      out_dir / "power_sweep.csv")
            med = median_by_epsilon(rows, "power")
            write_csv(med, ["epsilon", "median", "q25", "q75"], out_dir / "power_median.csv")
            plots.render_power_sweep(med, out_dir / "power.png")
            _log("power medians: " + " ".join(f"{m['epsilon']:g}:{m['median']:.3f}" for m in med))
        elif kind == "utility":
            rows.sort(key=lambda r: (r["epsilon"], r["seed"], r["classifier"]))
            write_csv(rows, ["epsilon", "seed", "classifier", "acc_noisy", "acc_clean"],
                      out_dir / "utility_sweep.csv")
            med_by_kind = {}
            for knd in sorted({r["classifier"] for r in rows}):
                sub = [r for r in rows if r["classifier"] == knd]
                med = median_by_epsilon(sub, "acc_noisy")
                med_by_kind[knd] = med
                write_csv(med, ["epsilon", "median", "q25", "q75"],
                          out_dir / f"utility_median_{knd}.csv")
            plots.render_utility_sweep(med_by_kind, out_dir / "utility.png")
            _log("utility sweep written")
        else:
            rows.sort(key=lambda r: (r["epsilon"], r["seed"]))
            write_csv(rows, ["epsilon", "seed", "accuracy", "collaborators"],
                      out_dir / "fl_sweep.csv")
            med = median_by_epsilon(rows, "accuracy")
            write_csv(med, ["epsilon", "median", "q25", "q75"], out_dir / "fl_median.csv")
            plots.render_fl_sweep(med, out_dir / "fl.png")
            _log("fl medians: " + " ".join(f"{m['epsilon']:g}:{m['median']:.3f}" for m in med))
    return 0


def cmd_check(args) -> int:
    cfg = _resolve(args, {"paths": None})
    problems = []
    manifests = []
    for root in cfg["paths"]:
        root = Path(root)
        if root.is_file() and root.name.endswith("manifest.json"):
            manifests.append(root)
        elif root.is_dir():
            manifests.extend(sorted(root.rglob("*.manifest.json")))
            manifests.extend(sorted(root.rglob("run_manifest.json")))
    fingerprints: dict[str, set[str]] = {}
    for mpath in manifests:
        with open(mpath, encoding="utf-8") as fh:
            doc = json.load(fh)
        for ipath, recorded in doc.get("input_hashes", {}).items():
            p = Path(ipath)
            if not p.exists():
                problems.append(f"{mpath}: input {ipath} is gone")
            elif hash_file(p) != recorded:
                problems.append(f"{mpath}: input {ipath} changed since the run")
    for root in cfg["paths"]:
        root = Path(root)
        if not root.is_dir():
            continue
        tree = fingerprints.setdefault(str(root), set())
        for mj in sorted(root.rglob("*.json")):
            if mj.name.endswith("manifest.json"):
                continue
            try:
                with open(mj, encoding="utf-8") as fh:
                    doc = json.load(fh)
            except (json.JSONDecodeError, UnicodeDecodeError):
                continue
            if isinstance(doc, dict) and "fingerprint" in doc:
                tree.add(doc["fingerprint"])
        for csv_path in sorted(root.rglob("*.csv")):
            with open(csv_path, encoding="utf-8") as fh:
                first = fh.readline()
            if first.startswith("# "):
                try:
                    tree.add(json.loads(first[2:])["fingerprint"])
                except (json.JSONDecodeError, KeyError):
                    problems.append(f"{csv_path}: unreadable share header")
        if len(tree) > 1:
            problems.append(f"{root}: multiple model fingerprints in one chain: {sorted(tree)}")
    result = {"manifests_checked": len(manifests), "problems": problems}
    print(json.dumps(result, sort_keys=True))
    return 0 if not problems else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse exits with 2 by default; validation errors are exit 1 here
        self.print_usage(sys.stderr)
        raise AgriShareError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="agrishare",
                     description="privacy-preserving agricultural data sharing toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, configure):
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML config file; explicit flags win")
        configure(p)
        p.set_defaults(fn=fn)
        return p

    def gen_data(p):
        p.add_argument("--dataset", choices=["crop", "market"])
        p.add_argument("--rows", type=int, help="rows (market) or rows per crop (crop)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", required=True)
    add("gen-data", cmd_gen_data, gen_data)

    def partition(p):
        p.add_argument("--input", required=True)
        p.add_argument("--schema", choices=sorted(SCHEMAS))
        p.add_argument("--markets", type=int)
        p.add_argument("--global-fraction", dest="global_fraction", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--stratify", action=argparse.BooleanOptionalAction)
        p.add_argument("--out-dir", dest="out_dir", required=True)
    add("partition", cmd_partition, partition)

    def train_pca(p):
        p.add_argument("--input", required=True)
        p.add_argument("--schema", choices=sorted(SCHEMAS))
        p.add_argument("--k", type=int)
        p.add_argument("--out", required=True)
    add("train-pca", cmd_train_pca, train_pca)

    def transform(p):
        p.add_argument("--model", required=True)
        p.add_argument("--input", required=True)
        p.add_argument("--schema", choices=sorted(SCHEMAS))
        p.add_argument("--out", required=True)
    add("transform", cmd_transform, transform)

    def privatize_(p):
        p.add_argument("--model", required=True)
        p.add_argument("--input", required=True, help="transformed CSV")
        p.add_argument("--epsilon", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", required=True)
    add("privatize", cmd_privatize, privatize_)

    def aggregate(p):
        p.add_argument("--model", required=True)
        p.add_argument("--shares", nargs="+", required=True)
        p.add_argument("--ids", nargs="+")
        p.add_argument("--out-dir", dest="out_dir", required=True)
    add("aggregate", cmd_aggregate, aggregate)

    def cluster(p):
        p.add_argument("--store", required=True)
        p.add_argument("--clusters", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", required=True)
        p.add_argument("--plot", help="optional cluster scatter PNG")
    add("cluster", cmd_cluster, cluster)

    def recommend(p):
        p.add_argument("--store", required=True)
        p.add_argument("--cluster-model", dest="cluster_model", required=True)
        p.add_argument("--model", required=True)
        p.add_argument("--profile", required=True, help="comma-separated raw feature row")
        p.add_argument("--m", type=int)
        p.add_argument("--out", required=True)
    add("recommend", cmd_recommend, recommend)

    def similarity(p):
        p.add_argument("--store", required=True)
        p.add_argument("--cluster-model", dest="cluster_model")
        p.add_argument("--a", required=True)
        p.add_argument("--b", required=True)
        p.add_argument("--mode", choices=["profile", "distribution"])
        p.add_argument("--out", required=True)
    add("similarity", cmd_similarity, similarity)

    def fedtrain(p):
        _add_pipeline_flags(p)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--initiator")
        p.add_argument("--m", type=int)
        p.add_argument("--mode", choices=["profile", "distribution"])
        p.add_argument("--rounds", type=int)
        p.add_argument("--local-epochs", dest="local_epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--hidden", type=int, help="hidden layer width of the federated net")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", dest="out_dir", required=True)
    add("fedtrain", cmd_fedtrain, fedtrain)

    def eval_power(p):
        _add_pipeline_flags(p)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--fpr", type=float)
        p.add_argument("--case-market", dest="case_market")
        p.add_argument("--n-control", dest="n_control", type=int)
        p.add_argument("--n-case", dest="n_case", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", required=True)
    add("eval-power", cmd_eval_power, eval_power)

    def eval_utility(p):
        _add_pipeline_flags(p)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--classifier", choices=sorted(evaluation.CLASSIFIER_TRAINERS))
        p.add_argument("--seed", type=int)
        p.add_argument("--train-on-noisy", dest="train_on_noisy",
                       action=argparse.BooleanOptionalAction)
        p.add_argument("--out", required=True)
    add("eval-utility", cmd_eval_utility, eval_utility)

    def table4(p):
        _add_pipeline_flags(p)
        p.add_argument("--seed", type=int)
        p.add_argument("--n-seeds", dest="n_seeds", type=int)
        p.add_argument("--eps-logreg", dest="eps_logreg", type=float)
        p.add_argument("--eps-gnb", dest="eps_gnb", type=float)
        p.add_argument("--eps-svm", dest="eps_svm", type=float)
        p.add_argument("--out-dir", dest="out_dir", required=True)
    add("table4", cmd_table4, table4)

    def sweep(p):
        _add_pipeline_flags(p)
        p.add_argument("--experiment", choices=["power", "utility", "both", "fl"])
        p.add_argument("--epsilons", help="comma-separated epsilon grid")
        p.add_argument("--seed", type=int)
        p.add_argument("--n-seeds", dest="n_seeds", type=int)
        p.add_argument("--fpr", type=float)
        p.add_argument("--jobs", type=int)
        p.add_argument("--train-on-noisy", dest="train_on_noisy",
                       action=argparse.BooleanOptionalAction,
                       help="utility arm: train on privatized rows (default) or clean")
        p.add_argument("--initiator")
        p.add_argument("--m", type=int)
        p.add_argument("--mode", choices=["profile", "distribution"])
        p.add_argument("--rounds", type=int)
        p.add_argument("--local-epochs", dest="local_epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--out-dir", dest="out_dir", required=True)
    add("sweep", cmd_sweep, sweep)

    def check(p):
        p.add_argument("paths", nargs="+")
    add("check", cmd_check, check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except AgriShareError as exc:
        _log(f"error: {exc}")
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures exit 2
        _log(f"runtime failure: {type(exc).__name__}: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
