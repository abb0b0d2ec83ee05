"""Command-line driver: prepare data, train, select features, evaluate, ensemble, reproduce.

Every stage reads its predecessors' files from the run directory
``<out>/seed<seed>``, so stages can be rerun or resumed independently.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import cart, fr1, fr2, kdd, lgp, synth
from .ensemble import (build_ensemble, comparison_report, evaluate, evaluate_ensemble,
                       per_class_accuracy, report_from_accuracy)
from .serialize import dumps, load_model, save_model

log = logging.getLogger("softids")

PARADIGMS = ("fr1", "fr2", "dt", "lgp")
DISPLAY = {"fr1": "FR1", "fr2": "FR2", "dt": "DT", "lgp": "LGP"}
DATA_ENV = "SOFTIDS_DATA_DIR"
DATA_FILES = ("kddcup.data_10_percent.gz", "kddcup.data_10_percent", "kddcup.data_10_percent_corrected")
CONFIG_FORMAT = "softids/run-config"


class CLIError(Exception):
    pass


def default_data_path() -> str | None:
    base = os.environ.get(DATA_ENV)
    if not base:
        return None
    for name in DATA_FILES:
        p = Path(base) / name
        if p.exists():
            return str(p)
    return str(Path(base) / DATA_FILES[0])


@dataclass
class RunConfig:
    data: str | None = None
    taxonomy: str | None = None
    seed: int | None = None
    train_size: int = 5092
    test_size: int = 6890
    features: str = "reduced"
    out: str = "runs"
    n_features: int = 12
    surrogate_weight: float = 0.5
    validation_fraction: float = 0.2
    tree_max_depth: int = 25
    tree_min_node_size: int = 2
    tree_max_surrogates: int = 5
    fr1_sigma_floor: float = 1e-3
    fr2_sets: int = 5
    fr2_epochs: int = 10
    fr2_eta_up: float = 0.001
    fr2_eta_down: float = 0.001
    lgp_budget: int = 20_000
    lgp_population: int = 2048
    skip: list[str] = field(default_factory=list)
    jobs: int = 1

    def to_dict(self) -> dict:
        return {"format": CONFIG_FORMAT, "version": 1, **dataclasses.asdict(self)}

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if doc.get("format", CONFIG_FORMAT) != CONFIG_FORMAT or doc.get("version", 1) != 1:
            raise CLIError("unsupported run-config document")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names - {"format", "version"}
        if unknown:
            raise CLIError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: v for k, v in doc.items() if k in names})

    @property
    def run_dir(self) -> Path:
        return Path(self.out) / f"seed{self.require_seed()}"

    def require_seed(self) -> int:
        if self.seed is None:
            raise CLIError("--seed is required")
        return int(self.seed)


# --- run-directory helpers ----------------------------------------------------

def _manifest_path(cfg: RunConfig) -> Path:
    return cfg.run_dir / "manifest.json"


def _read_manifest(cfg: RunConfig) -> dict:
    p = _manifest_path(cfg)
    if p.exists():
        return json.loads(p.read_text())
    return {"format": "softids/manifest", "version": 1, "stages": {}, "notes": []}


def _update_manifest(cfg: RunConfig, stage: str, **extra) -> None:
    man = _read_manifest(cfg)
    man["config"] = cfg.to_dict()
    man["stages"][stage] = {"completed": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
    for k, v in extra.items():
        if k == "notes":
            man["notes"] = list(dict.fromkeys(man.get("notes", []) + list(v)))
        else:
            man[k] = v
    _manifest_path(cfg).write_text(dumps(man))


def _load_split(cfg: RunConfig) -> tuple[kdd.Dataset, kdd.Dataset]:
    d = cfg.run_dir / "data"
    if not (d / "train.csv").exists() or not (d / "test.csv").exists():
        raise CLIError(f"{cfg.run_dir} is not prepared; run 'prepare' first")
    return kdd.read_dataset_csv(d / "train.csv"), kdd.read_dataset_csv(d / "test.csv")


def _fit_validation(cfg: RunConfig, train: kdd.Dataset) -> tuple[kdd.Dataset, kdd.Dataset]:
    fit_idx, val_idx = kdd.holdout_indices(train.y, cfg.validation_fraction, cfg.require_seed())
    return train.subset(fit_idx), train.subset(val_idx)


def _feature_labels(cfg: RunConfig, spec: str | None = None) -> tuple[str, tuple[str, ...]]:
    """Returns (feature-set name, labels)."""
    spec = spec or cfg.features
    if spec == "full":
        return "full", kdd.ATTRIBUTE_LABELS
    if spec == "reduced":
        p = cfg.run_dir / "features.json"
        if not p.exists():
            raise CLIError("no selected feature set yet; run 'select-features' first")
        return "reduced", tuple(json.loads(p.read_text())["selected"])
    labels = kdd.parse_feature_set(spec)
    return "custom-" + "-".join(labels), labels


def _model_dir(cfg: RunConfig, fs_name: str) -> Path:
    d = cfg.run_dir / "models" / fs_name
    d.mkdir(parents=True, exist_ok=True)
    return d


def _report_dir(cfg: RunConfig, fs_name: str) -> Path:
    d = cfg.run_dir / "reports" / fs_name
    d.mkdir(parents=True, exist_ok=True)
    return d


# --- stages -------------------------------------------------------------------

def cmd_prepare(cfg: RunConfig) -> dict:
    seed = cfg.require_seed()
    path = cfg.data or default_data_path()
    if not path:
        raise CLIError(f"no dataset given (use --data or set {DATA_ENV})")
    if not Path(path).exists():
        raise CLIError(f"dataset not found: {path}")
    taxonomy = kdd.load_taxonomy(cfg.taxonomy)
    try:
        records, classes, dropped = kdd.label_records(kdd.read_records(path), taxonomy)
    except kdd.ParseError as exc:
        raise CLIError(str(exc)) from None
    try:
        tr, te = kdd.split_indices(classes, cfg.train_size, cfg.test_size, seed)
    except ValueError as exc:
        raise CLIError(str(exc)) from None
    train_recs = [records[i] for i in tr]
    encoder, scaler = kdd.fit_pipeline(train_recs)
    train = kdd.transform_records(train_recs, classes[tr], encoder, scaler)
    test = kdd.transform_records([records[i] for i in te], classes[te], encoder, scaler)

    d = cfg.run_dir / "data"
    d.mkdir(parents=True, exist_ok=True)
    kdd.write_dataset_csv(train, d / "train.csv")
    kdd.write_dataset_csv(test, d / "test.csv")
    (cfg.run_dir / "pipeline.json").write_text(dumps(kdd.pipeline_to_dict(encoder, scaler)))
    (cfg.run_dir / "run_config.json").write_text(dumps(cfg.to_dict()))

    def counts(ds):
        return {c.display: n for c, n in ds.class_counts.items()}

    summary = {"source_records": len(records) + sum(dropped.values()),
               "dropped_labels": dict(sorted(dropped.items())),
               "train": {"total": len(train), "per_class": counts(train)},
               "test": {"total": len(test), "per_class": counts(test)}}
    _update_manifest(cfg, "prepare", counts=summary)
    return summary


def _train_one(cfg: RunConfig, paradigm: str, fit: kdd.Dataset, out: Path) -> object:
    seed = cfg.require_seed()
    if paradigm == "fr1":
        model = fr1.train_fr1(fit, sigma_floor=cfg.fr1_sigma_floor)
    elif paradigm == "fr2":
        rb = fr2.generate_rules(fit, fr2.build_partition(fit.n_attributes, cfg.fr2_sets))
        model = fr2.tune_certainty(rb, fit, cfg.fr2_epochs, cfg.fr2_eta_up, cfg.fr2_eta_down)
        (out / "fr2_rules.txt").write_text(model.describe())
    elif paradigm == "dt":
        params = cart.TreeParams(cfg.tree_max_depth, cfg.tree_min_node_size, cfg.tree_max_surrogates)
        model = cart.grow_tree(fit, params)
        (out / "dt.txt").write_text(model.dump())
    elif paradigm == "lgp":
        params = {k: dataclasses.replace(p, tournaments=cfg.lgp_budget,
                                         population_size=cfg.lgp_population)
                  for k, p in lgp.PAPER_PARAMS.items()}
        model, results = lgp.train_lgp(fit, params, seed, jobs=cfg.jobs)
        for k, res in results.items():
            (out / f"lgp_history_class{k}.csv").write_text(res.history_csv())
            (out / f"lgp_class{k}.txt").write_text(model.programs[k].text())
    else:
        raise CLIError(f"unknown paradigm {paradigm!r}; choose from {', '.join(PARADIGMS)}")
    save_model(model, out / f"{paradigm}.json")
    return model


def cmd_train(cfg: RunConfig, paradigm: str, features: str | None = None) -> object:
    if paradigm not in PARADIGMS:
        raise CLIError(f"unknown paradigm {paradigm!r}; choose from {', '.join(PARADIGMS)}")
    train, _ = _load_split(cfg)
    fs_name, labels = _feature_labels(cfg, features)
    fit, _ = _fit_validation(cfg, train)
    out = _model_dir(cfg, fs_name)
    model = _train_one(cfg, paradigm, fit.project(labels), out)
    _update_manifest(cfg, f"train:{fs_name}:{paradigm}")
    return model


def cmd_select_features(cfg: RunConfig) -> tuple[str, ...]:
    train, _ = _load_split(cfg)
    tree_path = cfg.run_dir / "models" / "full" / "dt.json"
    if tree_path.exists():
        tree = load_model(tree_path)
    else:
        tree = cmd_train(cfg, "dt", "full")
    imp = cart.variable_importance(tree, cfg.surrogate_weight)
    selected = cart.select_features(imp, cfg.n_features)
    overlap = sorted(set(selected) & set(kdd.REFERENCE_REDUCED_SET), key=kdd.LABEL_INDEX.get)
    doc = {"format": "softids/features", "version": 1, "k": cfg.n_features,
           "surrogate_weight": cfg.surrogate_weight, "selected": list(selected),
           "importance": [[lab, score] for lab, score in imp.ranked()],
           "reference_set": list(kdd.REFERENCE_REDUCED_SET),
           "reference_overlap": overlap}
    (cfg.run_dir / "features.json").write_text(dumps(doc))
    note = (f"Selected {len(selected)} attributes: {', '.join(selected)}\n"
            f"Reference 12-attribute set: {', '.join(kdd.REFERENCE_REDUCED_SET)}\n"
            f"Overlap: {len(overlap)} of {len(kdd.REFERENCE_REDUCED_SET)} ({', '.join(overlap) or 'none'})\n")
    d = cfg.run_dir / "reports"
    d.mkdir(parents=True, exist_ok=True)
    (d / "feature_overlap.txt").write_text(note)
    log.info("reference overlap %d/12", len(overlap))
    _update_manifest(cfg, "select-features")
    return selected


def _trained_models(cfg: RunConfig, fs_name: str) -> dict[str, object]:
    d = cfg.run_dir / "models" / fs_name
    models = {}
    for p in PARADIGMS:
        f = d / f"{p}.json"
        if f.exists() and p not in cfg.skip:
            models[DISPLAY[p]] = load_model(f)
    if not models:
        raise CLIError(f"no trained models for feature set {fs_name!r}")
    return models


def cmd_evaluate(cfg: RunConfig, features: str | None = None):
    _, test = _load_split(cfg)
    fs_name, labels = _feature_labels(cfg, features)
    models = _trained_models(cfg, fs_name)
    out = _report_dir(cfg, fs_name)
    matrices = {}
    for name, model in models.items():
        cm = evaluate(model, test)
        matrices[name] = cm
        (out / f"confusion_{name}.csv").write_text(cm.to_csv())
    title = {"full": "Performance comparison using full data set",
             "reduced": "Performance comparison using reduced data set"}.get(fs_name, "Performance comparison")
    report = comparison_report(matrices, f"{fs_name} ({len(labels)} attributes)", title)
    (out / "comparison.csv").write_text(report.to_csv())
    (out / "comparison.txt").write_text(report.to_text())
    _update_manifest(cfg, f"evaluate:{fs_name}")
    return report


def cmd_ensemble(cfg: RunConfig, features: str | None = None):
    train, test = _load_split(cfg)
    fs_name, labels = _feature_labels(cfg, features)
    models = _trained_models(cfg, fs_name)
    _, val = _fit_validation(cfg, train)
    ens = build_ensemble(models, val)
    cm = evaluate_ensemble(ens, test)
    out = _report_dir(cfg, fs_name)
    (out / "confusion_ensemble.csv").write_text(cm.to_csv())
    doc = {"format": "softids/ensemble", "version": 1,
           "experts": {kdd.AttackClass(k).display: n for k, n in ens.assignment.experts.items()},
           "validation_accuracy": {m: {kdd.AttackClass(k).display: a for k, a in acc.items()}
                                   for m, acc in ens.assignment.validation_accuracy.items()},
           "calibration": {"low": ens.low.tolist(), "high": ens.high.tolist()}}
    (out / "ensemble.json").write_text(dumps(doc))
    report = report_from_accuracy({"Ensemble": per_class_accuracy(cm)},
                                  f"{fs_name} ({len(labels)} attributes)",
                                  "Performance of the ensemble method")
    (out / "ensemble.csv").write_text(report.to_csv())
    text = report.to_text() + "\nExperts: " + ", ".join(
        f"{kdd.AttackClass(k).display}->{n}" for k, n in ens.assignment.experts.items()) + "\n"
    (out / "ensemble.txt").write_text(text)
    _update_manifest(cfg, f"ensemble:{fs_name}")
    return ens, cm


def cmd_reproduce(cfg: RunConfig, resume: bool = False) -> Path:
    """prepare -> DT on all attributes -> importance -> top-k -> every paradigm on
    both feature sets -> evaluation tables -> ensemble on the reduced set."""
    bad = set(cfg.skip) - set(PARADIGMS)
    if bad:
        raise CLIError(f"cannot skip unknown paradigms: {sorted(bad)}")
    run = cfg.run_dir
    if not (resume and (run / "data" / "train.csv").exists()):
        cmd_prepare(cfg)
    if not (resume and (run / "models" / "full" / "dt.json").exists()):
        cmd_train(cfg, "dt", "full")
    if not (resume and (run / "features.json").exists()):
        cmd_select_features(cfg)
    active = [p for p in PARADIGMS if p not in cfg.skip]
    for fs in ("full", "reduced"):
        fs_name, _ = _feature_labels(cfg, fs)
        for p in active:
            if resume and (run / "models" / fs_name / f"{p}.json").exists():
                continue
            log.info("training %s on %s", p, fs_name)
            cmd_train(cfg, p, fs)
        cmd_evaluate(cfg, fs)
    cmd_ensemble(cfg, "reduced")
    notes = [f"skipped paradigms: {', '.join(cfg.skip)}"] if cfg.skip else []
    _update_manifest(cfg, "reproduce", notes=notes)
    return run


# --- argument parsing -----------------------------------------------------------

def _common(ap: argparse.ArgumentParser, data: bool = False) -> None:
    ap.add_argument("--config", help="run-config JSON; flags override its values")
    ap.add_argument("--out", help="output root (run directory is <out>/seed<seed>)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--features", help="full | reduced | comma-separated attribute labels")
    ap.add_argument("--jobs", type=int)
    ap.add_argument("--budget", type=int, help="LGP tournaments per class")
    ap.add_argument("--skip", action="append", choices=PARADIGMS, help="paradigm to leave out")
    if data:
        ap.add_argument("--data", help=f"KDD file (plain or gzip); default from ${DATA_ENV}")
        ap.add_argument("--taxonomy", help="attack_name,category file (default: bundled)")
        ap.add_argument("--train-size", type=int)
        ap.add_argument("--test-size", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="softids", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("prepare", help="parse, split, encode and scale the data")
    _common(p, data=True)
    p = sub.add_parser("train", help="train one paradigm")
    p.add_argument("paradigm", choices=PARADIGMS)
    _common(p)
    p = sub.add_parser("select-features", help="decision-tree importance and top-k selection")
    _common(p)
    p.add_argument("--k", type=int)
    p.add_argument("--p", type=float, help="surrogate improvement weight in (0, 1)")
    p = sub.add_parser("evaluate", help="per-class accuracy of every trained model")
    _common(p)
    p = sub.add_parser("ensemble", help="per-class expert ensemble")
    _common(p)
    p = sub.add_parser("reproduce", help="run the whole pipeline")
    _common(p, data=True)
    p.add_argument("--resume", action="store_true", help="reuse finished stages")
    p = sub.add_parser("synth", help="write synthetic KDD-format records")
    p.add_argument("path")
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    return ap


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        try:
            cfg = RunConfig.from_dict(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise CLIError(f"cannot read config {args.config}: {exc}") from None
    overrides = {
        "out": args.out, "seed": args.seed, "features": args.features, "jobs": args.jobs,
        "lgp_budget": args.budget, "skip": args.skip,
        "data": getattr(args, "data", None), "taxonomy": getattr(args, "taxonomy", None),
        "train_size": getattr(args, "train_size", None), "test_size": getattr(args, "test_size", None),
        "n_features": getattr(args, "k", None), "surrogate_weight": getattr(args, "p", None),
    }
    return dataclasses.replace(cfg, **{k: v for k, v in overrides.items() if v is not None})


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            synth.write(args.path, args.fraction, args.seed)
            return 0
        cfg = config_from_args(args)
        cfg.require_seed()
        if args.command == "prepare":
            summary = cmd_prepare(cfg)
            print(f"train {summary['train']['total']}  test {summary['test']['total']}  -> {cfg.run_dir}")
        elif args.command == "train":
            cmd_train(cfg, args.paradigm)
        elif args.command == "select-features":
            print(", ".join(cmd_select_features(cfg)))
        elif args.command == "evaluate":
            print(cmd_evaluate(cfg).to_text(), end="")
        elif args.command == "ensemble":
            _, cm = cmd_ensemble(cfg)
            for k, a in per_class_accuracy(cm).items():
                print(f"{kdd.AttackClass(k).display:8s}{a:8.2f}")
        elif args.command == "reproduce":
            run = cmd_reproduce(cfg, resume=args.resume)
            print(f"reports written under {run / 'reports'}")
    except CLIError as exc:
        print(f"softids: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"softids: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
