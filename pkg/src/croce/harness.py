"""Experiment orchestration: offline training, generation, evaluation, sweeps.

Every trained artifact is persisted under the output directory with a
manifest keyed by a content hash of the exact configuration that produced it,
so re-running with an unchanged config is a no-op and changing only the
inference-time settings (gamma, alpha) reuses all offline work. Inference
verifies artifact hashes and never writes into the offline directories.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import cfgen, ensemble as ens, flow as flow_mod, metrics as metrics_mod
from .classifier import Classifier, ClassifierConfig, train as train_classifier
from .cfgen import BaselineConfig, CounterfactualResult, CroceConfig
from .data import Dataset, FoldSplit, load_csv, make_diabetes_like, make_moons, split_folds
from .flow import ConditionalFlow, FlowConfig, threshold_tau_by_class

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    dataset: dict
    out_dir: Path
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    consensus_k: int = 40
    eval_k: int = 30
    n_folds: int = 5
    gammas: tuple[float, ...] = (0.7, 0.8, 0.9)
    alphas: tuple[float, ...] = (5.0,)
    steps: int = 2000
    step_size: float = 1e-2
    optimizer: str = "plain_gd"
    grad_clip: float | None = 1.0
    seed: int = 7
    threads: int = 1
    max_test_instances: int | None = None

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        self.gammas = tuple(float(g) for g in self.gammas)
        self.alphas = tuple(float(a) for a in self.alphas)
        if not self.gammas:
            raise ValueError("at least one gamma is required")
        if any(not 0.0 < g <= 1.0 for g in self.gammas):
            raise ValueError(f"gammas must lie in (0, 1], got {self.gammas}")
        if self.dataset.get("name") == "csv" and not Path(self.dataset["path"]).exists():
            raise FileNotFoundError(self.dataset["path"])

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        kwargs = dict(raw)
        if "classifier" in kwargs:
            c = dict(kwargs["classifier"])
            if "hidden_sizes" in c:
                c["hidden_sizes"] = tuple(c["hidden_sizes"])
            kwargs["classifier"] = ClassifierConfig(**c)
        if "flow" in kwargs:
            kwargs["flow"] = FlowConfig(**kwargs["flow"])
        if "baseline" in kwargs:
            kwargs["baseline"] = BaselineConfig(**kwargs["baseline"])
        kwargs["out_dir"] = Path(kwargs["out_dir"])
        return cls(**kwargs)


def derive_seed(global_seed: int, *tags) -> int:
    """Deterministically derive a stage seed from the global seed and tags."""
    text = f"{global_seed}/" + "/".join(str(t) for t in tags)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "big")


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, default=str)


def _key(payload: dict) -> str:
    return hashlib.sha256(_canonical(payload).encode()).hexdigest()


def _sha_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_dataset(spec: dict) -> Dataset:
    name = spec.get("name")
    if name == "moons":
        return make_moons(spec.get("n", 1024), spec.get("noise", 0.1), spec.get("seed", 0))
    if name == "diabetes_synthetic":
        return make_diabetes_like(spec.get("n", 768), spec.get("seed", 20))
    if name == "csv":
        return load_csv(
            spec["path"],
            spec["label_column"],
            spec["positive_label"],
            tuple(spec.get("drop_columns", ())),
        )
    raise ValueError(f"unknown dataset {name!r}")


def dataset_fingerprint(dataset: Dataset) -> str:
    h = hashlib.sha256()
    h.update(dataset.X.tobytes())
    h.update(dataset.y.tobytes())
    return h.hexdigest()


class _Stage:
    """Cache-or-build wrapper for one persisted artifact group."""

    def __init__(self, directory: Path, name: str, key: str):
        self.dir = directory
        self.name = name
        self.key = key
        self.manifest_path = directory / f"{name}.manifest.json"

    def cached(self) -> dict | None:
        if not self.manifest_path.exists():
            return None
        manifest = json.loads(self.manifest_path.read_text())
        if manifest.get("status") != "COMPLETE" or manifest.get("key") != self.key:
            return None
        for rel, sha in manifest["files"].items():
            path = self.dir / rel
            if not path.exists() or _sha_file(path) != sha:
                logger.info("stage=%s status=stale reason=hash-mismatch file=%s", self.name, rel)
                return None
        return manifest

    def run(self, build, load, extra_meta: dict | None = None):
        manifest = self.cached()
        if manifest is not None:
            logger.info("stage=%s status=cached key=%s", self.name, self.key[:12])
            return load(manifest)
        self.dir.mkdir(parents=True, exist_ok=True)
        started = time.monotonic()
        try:
            result, files = build()
        except Exception:
            self.manifest_path.write_text(_canonical({"status": "FAILED", "key": self.key}))
            raise
        manifest = {
            "status": "COMPLETE",
            "stage": self.name,
            "key": self.key,
            "seconds": round(time.monotonic() - started, 3),
            "files": {rel: _sha_file(self.dir / rel) for rel in files},
            **(extra_meta or {}),
        }
        self.manifest_path.write_text(_canonical(manifest))
        logger.info("stage=%s status=built key=%s", self.name, self.key[:12])
        return result


@dataclass
class FoldArtifacts:
    fold: int
    split: FoldSplit
    base: Classifier
    consensus_ens: ens.Ensemble
    retrain_ens: ens.Ensemble
    bootstrap_ens: ens.Ensemble
    s_train: np.ndarray
    flow: ConditionalFlow
    baseline_flow: ConditionalFlow


def _build_ensemble_stage(fold_dir, name, key, kind, K, seed, builder, meta):
    stage = _Stage(fold_dir / name, name, key)

    def build():
        e = builder()
        files = []
        for i, member in enumerate(e.members):
            rel = f"member_{i:03d}.npz"
            member.save(stage.dir / rel)
            files.append(rel)
        return e, files

    def load(manifest):
        members = [Classifier.load(stage.dir / f"member_{i:03d}.npz") for i in range(K)]
        return ens.Ensemble(kind, members, seed)

    return stage.run(build, load, extra_meta={"kind": kind, "K": K, "seeds": list(range(seed, seed + K)), **meta})


def run_offline(config: ExperimentConfig) -> list[FoldArtifacts]:
    """Train base models, ensembles, consensus values and flows for all folds."""
    dataset = load_dataset(config.dataset)
    fp = dataset_fingerprint(dataset)
    splits = split_folds(dataset, config.n_folds, derive_seed(config.seed, "splits"))
    config.out_dir.mkdir(parents=True, exist_ok=True)
    (config.out_dir / "splits.json").write_text(
        _canonical(
            {
                "fingerprint": fp,
                "folds": [
                    {
                        "fold": s.fold_index,
                        "train": s.train_idx.tolist(),
                        "valpool": s.valpool_idx.tolist(),
                        "test": s.test_idx.tolist(),
                    }
                    for s in splits
                ],
            }
        )
    )

    clf_dict = asdict(config.classifier)
    flow_dict = asdict(config.flow)
    artifacts = []
    for split in splits:
        fold = split.fold_index
        fold_dir = config.out_dir / f"fold{fold}"
        fold_dir.mkdir(parents=True, exist_ok=True)
        X_train, y_train = split.scaled(dataset, "train")
        X_pool, y_pool = split.scaled(dataset, "valpool")
        meta = {"fingerprint": fp, "fold": fold}

        base_key = _key({"stage": "base", "clf": clf_dict, "fold": fold, "fp": fp, "seed": config.seed})
        base_stage = _Stage(fold_dir, "base_model", base_key)

        def build_base():
            model = train_classifier(
                replace(config.classifier, seed=derive_seed(config.seed, "base", fold)),
                X_train,
                y_train,
            )
            model.save(fold_dir / "base_model.npz")
            return model, ["base_model.npz"]

        base = base_stage.run(build_base, lambda m: Classifier.load(fold_dir / "base_model.npz"), meta)

        cons_seed = derive_seed(config.seed, "consensus", fold)
        cons_key = _key({"stage": "consensus", "clf": clf_dict, "fold": fold, "fp": fp, "K": config.consensus_k, "seed": cons_seed})
        consensus_ens = _build_ensemble_stage(
            fold_dir, "consensus", cons_key, "consensus", config.consensus_k, cons_seed,
            lambda: ens.build_consensus_ensemble(X_train, y_train, config.classifier, config.consensus_k, cons_seed, config.threads),
            meta,
        )

        ret_seed = derive_seed(config.seed, "retrain_eval", fold)
        ret_key = _key({"stage": "retrain_eval", "clf": clf_dict, "fold": fold, "fp": fp, "K": config.eval_k, "seed": ret_seed})
        retrain_ens = _build_ensemble_stage(
            fold_dir, "retrain_eval", ret_key, "retrain_eval", config.eval_k, ret_seed,
            lambda: ens.build_retrain_eval_ensemble(X_train, y_train, X_pool, y_pool, config.classifier, config.eval_k, ret_seed, config.threads),
            meta,
        )

        bs_seed = derive_seed(config.seed, "bootstrap_eval", fold)
        bs_key = _key({"stage": "bootstrap_eval", "clf": clf_dict, "fold": fold, "fp": fp, "K": config.eval_k, "seed": bs_seed})
        bootstrap_ens = _build_ensemble_stage(
            fold_dir, "bootstrap_eval", bs_key, "bootstrap_eval", config.eval_k, bs_seed,
            lambda: ens.build_bootstrap_eval_ensemble(X_pool, y_pool, config.classifier, config.eval_k, bs_seed, config.threads),
            meta,
        )

        s_key = _key({"stage": "consensus_s", "parent": cons_key})
        s_stage = _Stage(fold_dir, "consensus_s", s_key)

        def build_s():
            s = ens.consensus(consensus_ens, X_train)
            np.save(fold_dir / "consensus_s.npy", s)
            return s, ["consensus_s.npy"]

        s_train = s_stage.run(build_s, lambda m: np.load(fold_dir / "consensus_s.npy"), meta)

        flow_key = _key({"stage": "flow", "flow": flow_dict, "parent": s_key, "fold": fold, "fp": fp})
        flow_stage = _Stage(fold_dir, "flow", flow_key)

        def build_flow():
            f = flow_mod.fit(X_train, s_train, replace(config.flow, seed=derive_seed(config.seed, "flow", fold)))
            f.save(fold_dir / "flow.npz")
            return f, ["flow.npz"]

        fold_flow = flow_stage.run(build_flow, lambda m: ConditionalFlow.load(fold_dir / "flow.npz"), meta)

        bl_key = _key({"stage": "baseline_flow", "flow": flow_dict, "fold": fold, "fp": fp, "seed": config.seed})
        bl_stage = _Stage(fold_dir, "baseline_flow", bl_key)

        def build_baseline_flow():
            f = flow_mod.fit(
                X_train,
                y_train.astype(np.float64),
                replace(config.flow, seed=derive_seed(config.seed, "baseline_flow", fold)),
            )
            f.tau_per_class = threshold_tau_by_class(f, X_train, y_train)
            f.save(fold_dir / "baseline_flow.npz")
            return f, ["baseline_flow.npz"]

        baseline_flow = bl_stage.run(
            build_baseline_flow, lambda m: ConditionalFlow.load(fold_dir / "baseline_flow.npz"), meta
        )

        artifacts.append(
            FoldArtifacts(fold, split, base, consensus_ens, retrain_ens, bootstrap_ens, s_train, fold_flow, baseline_flow)
        )
    return artifacts


def _test_matrix(config: ExperimentConfig, dataset: Dataset, split: FoldSplit) -> np.ndarray:
    X_test, _ = split.scaled(dataset, "test")
    if config.max_test_instances:
        X_test = X_test[: config.max_test_instances]
    return X_test


def _json_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True)


def _result_record(dataset_name, method, fold, index, r: CounterfactualResult) -> dict:
    return {
        "dataset": dataset_name,
        "method": method,
        "fold": fold,
        "index": int(index),
        "x0": r.x0.tolist(),
        "x_cf": r.x_cf.tolist(),
        "delta": r.delta.tolist(),
        "s_star": r.s_star,
        "gamma": r.gamma,
        "alpha": r.alpha,
        "target_class": r.target_class,
        "final_loss": r.final_loss,
        "hinge_active": r.hinge_active,
    }


def generate(config: ExperimentConfig, method: str = "croce") -> Path:
    """Generate counterfactuals for every (gamma, fold) cell; write JSON lines."""
    if method not in ("croce", "baseline"):
        raise ValueError(f"unknown method {method!r}")
    dataset = load_dataset(config.dataset)
    artifacts = run_offline(config)
    name = config.dataset.get("name", "dataset")
    report_dir = config.out_dir / "reports" / method
    report_dir.mkdir(parents=True, exist_ok=True)
    out_path = report_dir / "results.jsonl"

    alpha = config.alphas[0]
    gen_payload = {
        "method": method, "gammas": config.gammas, "alpha": alpha,
        "steps": config.steps, "eta": config.step_size, "optimizer": config.optimizer,
        "grad_clip": config.grad_clip, "baseline": asdict(config.baseline),
        "max_test": config.max_test_instances, "seed": config.seed,
        # upstream artifacts feed the optimization, so their configuration is
        # part of this stage's identity too
        "clf": asdict(config.classifier), "flow": asdict(config.flow),
        "fp": dataset_fingerprint(dataset),
    }
    lines = []
    for art in artifacts:
        X_test = _test_matrix(config, dataset, art.split)
        pairs = cfgen.select_explanation_targets(art.base, X_test)
        targets = np.array([t for _, t in pairs])
        # one cached stage per fold so an interrupted multi-fold run resumes
        # instead of redoing finished folds
        stage = _Stage(report_dir, f"fold{art.fold}_results", _key({**gen_payload, "fold": art.fold}))

        def build(art=art, X_test=X_test, targets=targets):
            if method == "croce":
                n, g = len(targets), len(config.gammas)
                X0 = np.repeat(X_test, g, axis=0)
                gam = np.tile(np.array(config.gammas), n)
                tgt = np.repeat(targets, g)
                cfg = CroceConfig(
                    gamma=config.gammas[0], alpha=alpha, steps=config.steps,
                    step_size=config.step_size, optimizer=config.optimizer,
                    grad_clip=config.grad_clip,
                )
                results = cfgen.generate_croce_batch(art.flow, X0, tgt, gam, cfg, alphas=alpha)
                fold_lines = [
                    _json_line(_result_record(name, method, art.fold, i // g, r))
                    for i, r in enumerate(results)
                ]
            else:
                cfg = replace(config.baseline, steps=config.steps, step_size=config.step_size)
                results = cfgen.generate_baseline_batch(art.baseline_flow, art.base, X_test, targets, cfg)
                fold_lines = [
                    _json_line(_result_record(name, method, art.fold, i, r))
                    for i, r in enumerate(results)
                ]
            rel = f"fold{art.fold}_results.jsonl"
            (report_dir / rel).write_text("\n".join(fold_lines) + "\n")
            return fold_lines, [rel]

        def load(manifest, art=art):
            return (report_dir / f"fold{art.fold}_results.jsonl").read_text().splitlines()

        lines.extend(stage.run(build, load))
        logger.info("generate method=%s fold=%d instances=%d", method, art.fold, len(pairs))

    out_path.write_text("\n".join(lines) + "\n")
    logger.info("generate method=%s written=%s", method, out_path)
    return out_path


def _load_results(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text().splitlines() if line]


def _record_to_result(rec: dict) -> CounterfactualResult:
    return CounterfactualResult(
        x0=np.array(rec["x0"]),
        delta=np.array(rec["delta"]),
        s_star=rec["s_star"],
        target_class=rec["target_class"],
        gamma=rec["gamma"],
        alpha=rec["alpha"],
        loss_trace=np.empty(0),
        final_loss=rec["final_loss"],
        hinge_active=rec["hinge_active"],
    )


def evaluate(config: ExperimentConfig, method: str = "croce") -> dict:
    """Score persisted results along the six metric dimensions."""
    dataset = load_dataset(config.dataset)
    artifacts = {a.fold: a for a in run_offline(config)}
    report_dir = config.out_dir / "reports" / method
    records = _load_results(report_dir / "results.jsonl")

    cells: dict[tuple, dict[int, list]] = {}
    for rec in records:
        cell = (rec["gamma"], rec["alpha"])
        cells.setdefault(cell, {}).setdefault(rec["fold"], []).append(rec)

    report_rows = []
    report_json = {}
    def _cell_key(kv):
        gamma, alpha = kv[0]
        return (-1.0 if gamma is None else gamma, -1.0 if alpha is None else alpha)

    for (gamma, alpha), folds in sorted(cells.items(), key=_cell_key):
        fold_values = []
        for fold in sorted(folds):
            art = artifacts[fold]
            X_train, y_train = art.split.scaled(dataset, "train")
            results = [_record_to_result(r) for r in folds[fold]]
            fold_values.append(
                metrics_mod.evaluate_fold(art.base, art.retrain_ens, art.bootstrap_ens, results, X_train, y_train)
            )
        report = metrics_mod.build_report(fold_values)
        row = {
            "dataset": config.dataset.get("name"),
            "method": method,
            "gamma": gamma,
            "alpha": alpha,
        }
        for nm_ in metrics_mod.METRIC_NAMES:
            row[nm_] = getattr(report, nm_).mean
            row[f"{nm_}_std"] = getattr(report, nm_).stdev
        report_rows.append(row)
        report_json[f"gamma={gamma},alpha={alpha}"] = report.as_dict()
        logger.info(
            "evaluate method=%s gamma=%s validity=%.3f l1=%.3f plausibility=%.3f rob_ret=%.3f rob_bs=%.3f",
            method, gamma, row["validity"], row["l1"], row["plausibility"], row["rob_ret"], row["rob_bs"],
        )

    with open(report_dir / "report.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(report_rows[0].keys()))
        writer.writeheader()
        writer.writerows(report_rows)
    (report_dir / "report.json").write_text(json.dumps(report_json, indent=1, sort_keys=True))
    return report_json


def run_inference(config: ExperimentConfig, method: str = "croce") -> dict:
    generate(config, method)
    return evaluate(config, method)


def run_sweep(config: ExperimentConfig, sweep: str = "gamma") -> Path:
    """Trade-off table: one row per sweep value per fold plus aggregate rows."""
    if sweep not in ("gamma", "alpha"):
        raise ValueError(f"unknown sweep {sweep!r}")
    dataset = load_dataset(config.dataset)
    artifacts = run_offline(config)
    name = config.dataset.get("name", "dataset")

    if sweep == "gamma":
        values = list(config.gammas)
        alphas = [config.alphas[0]] * len(values)
    else:
        values = list(config.alphas)
        alphas = values
    gammas = list(config.gammas) if sweep == "gamma" else [config.gammas[0]] * len(values)

    report_dir = config.out_dir / "reports"
    report_dir.mkdir(parents=True, exist_ok=True)
    sweep_payload = {
        "sweep": sweep, "values": values, "gammas": gammas, "alphas": alphas,
        "steps": config.steps, "eta": config.step_size, "optimizer": config.optimizer,
        "grad_clip": config.grad_clip, "max_test": config.max_test_instances,
        "seed": config.seed,
        "clf": asdict(config.classifier), "flow": asdict(config.flow),
        "fp": dataset_fingerprint(dataset),
    }
    per_cell: dict[float, list[dict]] = {v: [] for v in values}
    for art in artifacts:
        stage = _Stage(report_dir, f"sweep_{sweep}_fold{art.fold}", _key({**sweep_payload, "fold": art.fold}))

        def build(art=art):
            X_test = _test_matrix(config, dataset, art.split)
            X_train, y_train = art.split.scaled(dataset, "train")
            pairs = cfgen.select_explanation_targets(art.base, X_test)
            targets = np.array([t for _, t in pairs])
            n, m = len(pairs), len(values)
            X0 = np.repeat(X_test, m, axis=0)
            tgt = np.repeat(targets, m)
            gam = np.tile(np.array(gammas), n)
            alp = np.tile(np.array(alphas), n)
            cfg = CroceConfig(
                gamma=gammas[0], alpha=alphas[0], steps=config.steps,
                step_size=config.step_size, optimizer=config.optimizer,
                grad_clip=config.grad_clip,
            )
            results = cfgen.generate_croce_batch(art.flow, X0, tgt, gam, cfg, alphas=alp)
            cells = []
            for j, v in enumerate(values):
                cell = [results[i * m + j] for i in range(n)]
                vals = metrics_mod.evaluate_fold(
                    art.base, art.retrain_ens, art.bootstrap_ens, cell, X_train, y_train
                )
                cells.append({k: float(np.mean(arr)) for k, arr in vals.items()})
            rel = f"sweep_{sweep}_fold{art.fold}.json"
            (report_dir / rel).write_text(_canonical(cells))
            return cells, [rel]

        def load(manifest, art=art):
            return json.loads((report_dir / f"sweep_{sweep}_fold{art.fold}.json").read_text())

        fold_cells = stage.run(build, load)
        for v, vals in zip(values, fold_cells):
            per_cell[v].append(vals)
        logger.info("sweep=%s fold=%d done", sweep, art.fold)

    rows = []
    for v in values:
        for fold, vals in enumerate(per_cell[v]):
            rows.append({"dataset": name, "sweep": sweep, "value": v, "fold": fold, **vals})
        agg = {k: float(np.mean([fv[k] for fv in per_cell[v]])) for k in metrics_mod.METRIC_NAMES}
        rows.append({"dataset": name, "sweep": sweep, "value": v, "fold": "mean", **agg})

    out = report_dir / f"sweep_{sweep}.csv"
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    logger.info("sweep=%s written=%s", sweep, out)
    return out


def moons_config(out_dir, seed: int = 7, threads: int = 1) -> ExperimentConfig:
    return ExperimentConfig(
        dataset={"name": "moons", "n": 1024, "noise": 0.1, "seed": 0},
        out_dir=Path(out_dir),
        gammas=(0.7, 0.8, 0.9),
        seed=seed,
        threads=threads,
    )


def diabetes_config(out_dir, seed: int = 7, threads: int = 1) -> ExperimentConfig:
    # 8-d tabular data wants different settings than 2-d moons: narrower,
    # weight-decayed members keep the eval ensembles from memorizing their
    # bootstraps; the flow trains on every row for the full epoch budget
    # (val_fraction=0) because held-out-likelihood early stopping favors
    # blurred conditionals whose tau-level set hugs the decision boundary;
    # the looser clip lets far-off instances cross the low-density gap to
    # the high-consensus core within the step budget.
    return ExperimentConfig(
        dataset={"name": "diabetes_synthetic", "n": 768, "seed": 20},
        out_dir=Path(out_dir),
        classifier=ClassifierConfig(hidden_sizes=(32,), epochs=200, weight_decay=1e-3),
        flow=FlowConfig(cond_embed_gain=16.0, val_fraction=0.0),
        baseline=BaselineConfig(lam=0.5),
        grad_clip=8.0,
        gammas=(0.7, 0.8, 0.9),
        seed=seed,
        threads=threads,
    )


MOONS_CHECKS = (
    ("validity = 1.00 +/- 0.01", lambda row: abs(row["validity"] - 1.0) <= 0.01),
    ("rob_ret >= 0.99", lambda row: row["rob_ret"] >= 0.99),
    ("rob_bs >= 0.99", lambda row: row["rob_bs"] >= 0.99),
    ("mean L1 in [0.30, 0.55]", lambda row: 0.30 <= row["l1"] <= 0.55),
    ("plausibility < 0.06", lambda row: row["plausibility"] < 0.06),
)


def reproduce_moons(out_dir, seed: int = 7, threads: int = 1) -> bool:
    """One-shot benchmark run; prints one pass/fail line per check per gamma."""
    config = moons_config(out_dir, seed, threads)
    report = run_inference(config, "croce")
    all_ok = True
    for key, detail in sorted(report.items()):
        row = {m: detail[m]["mean"] for m in metrics_mod.METRIC_NAMES}
        for label, check in MOONS_CHECKS:
            ok = check(row)
            all_ok &= ok
            print(f"[{'PASS' if ok else 'FAIL'}] {key} {label}")
    return all_ok
