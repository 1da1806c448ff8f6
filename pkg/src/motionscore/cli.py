"""Command-line entry point.

Subcommands: synth, featurize, train, evaluate, predict, explain. Numeric
results always go to files under --out; stdout carries a short human summary.
Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 internal
error. Every run writes a manifest (command, config snapshot, seed, input
hashes, version, timestamp) sufficient to reproduce it.

Configuration precedence: command-line flags > --config JSON file > defaults.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .attention import AttentionConfig, FusionConfig
from .backbone import BackboneConfig
from .data import (
    Dataset,
    SessionParseError,
    SessionValidationError,
    load_sessions,
    save_sessions,
)
from .explain import (
    ShapConfig,
    export_beeswarm,
    shap_sampling,
    temporal_report,
    write_temporal_csv,
)
from .frames import PreprocessConfig, build_feature_matrix, channel_layout
from .global_stats import GLOBAL_FEATURE_NAMES, GlobalConfig, build_global_vector
from .model import ModelConfig, SkillModel
from .synthetic import GeneratorConfig, generate
from .training import SordConfig, TrainConfig, metrics, split_and_cv


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; the contract says 1
        raise UsageError(message)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out: Path, command: str, args: argparse.Namespace, config: dict, inputs: list[Path]) -> None:
    manifest = {
        "command": command,
        "argv": [a for a in sys.argv[1:]] if sys.argv else [],
        "seed": getattr(args, "seed", None),
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs if p and Path(p).is_file()},
        "version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(p)
    with open(p) as fh:
        return json.load(fh)


def _dataclass_from(cls, raw: dict):
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - fields
    if unknown:
        raise ValueError(f"unknown {cls.__name__} option(s): {sorted(unknown)}")
    return cls(**raw)


def _model_config(raw: dict) -> ModelConfig:
    cfg = ModelConfig(
        backbone=_dataclass_from(BackboneConfig, raw.get("backbone", {})),
        attention=_dataclass_from(AttentionConfig, raw.get("attention", {})),
        fusion=_dataclass_from(FusionConfig, raw.get("fusion", {})),
        preprocess=_dataclass_from(PreprocessConfig, raw.get("preprocess", {})),
        global_cfg=_dataclass_from(GlobalConfig, raw.get("global_cfg", {})),
    )
    cfg.fusion.hidden_sizes = tuple(cfg.fusion.hidden_sizes)
    return cfg


def _train_config(raw: dict, seed: int) -> TrainConfig:
    raw = dict(raw)
    sord = _dataclass_from(SordConfig, raw.pop("sord", {}))
    cfg = _dataclass_from(TrainConfig, {**raw, "sord": sord})
    cfg.seed = seed
    return cfg


def build_parser() -> _Parser:
    p = _Parser(prog="motionscore", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"motionscore {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate synthetic graded sessions")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--config", help="JSON config file (generator section)")
    sp.add_argument("--n-sessions", type=int, help="override the session count")

    fp = sub.add_parser("featurize", help="write per-session feature matrices")
    fp.add_argument("--data", required=True, help="session .jsonl file or directory")
    fp.add_argument("--out", required=True)
    fp.add_argument("--config", help="JSON config file (model section)")
    fp.add_argument("--globals", action="store_true", help="also write the global-feature table")

    tp = sub.add_parser("train", help="70/30 split, grid CV, final model + report")
    tp.add_argument("--data", required=True)
    tp.add_argument("--out", required=True)
    tp.add_argument("--seed", type=int, default=0)
    tp.add_argument("--config", help="JSON config file (model/training sections)")

    ep = sub.add_parser("evaluate", help="score a labeled set with a saved model")
    ep.add_argument("--model", required=True)
    ep.add_argument("--data", required=True)
    ep.add_argument("--out", required=True)

    pp = sub.add_parser("predict", help="score sessions with a saved model")
    pp.add_argument("--model", required=True)
    pp.add_argument("--data", required=True)
    pp.add_argument("--out", required=True)

    xp = sub.add_parser("explain", help="temporal importance and/or SHAP attributions")
    xp.add_argument("--model", required=True)
    xp.add_argument("--data", required=True, help="sessions; also the SHAP background")
    xp.add_argument("--out", required=True)
    xp.add_argument("--temporal", action="store_true")
    xp.add_argument("--global", dest="global_", action="store_true")
    xp.add_argument("--session", help="restrict to one session id")
    xp.add_argument("--samples", type=int, default=2000)
    xp.add_argument("--seed", type=int, default=0)
    xp.add_argument("--top-k", type=int, default=3)
    xp.add_argument("--merge-gap", type=int, default=5)
    xp.add_argument("--svg", action="store_true", help="also render beeswarm.svg")
    return p


def _cmd_synth(args) -> int:
    raw = _load_config_file(args.config).get("generator", {})
    cfg = _dataclass_from(GeneratorConfig, raw)
    cfg.seed = args.seed
    if args.n_sessions is not None:
        cfg.n_sessions = args.n_sessions
    ds, sidecar = generate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_sessions(ds, out / "sessions.jsonl")
    with open(out / "truth.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
    _write_manifest(out, "synth", args, dataclasses.asdict(cfg), [Path(args.config)] if args.config else [])
    print(f"wrote {len(ds)} sessions to {out / 'sessions.jsonl'}")
    return 0


def _cmd_featurize(args) -> int:
    raw = _load_config_file(args.config)
    cfg = _model_config(raw.get("model", {}))
    ds = load_sessions(args.data)
    out = Path(args.out)
    feat_dir = out / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)
    layout = channel_layout()
    for s in ds:
        mat = build_feature_matrix(s, cfg.preprocess)
        np.savez(feat_dir / f"{s.session_id}.npz", data=mat.astype("<f8"))
    with open(out / "layout.json", "w") as fh:
        json.dump({"channels": layout, "global_features": list(GLOBAL_FEATURE_NAMES)}, fh, indent=2)
    if args.globals:
        with open(out / "globals.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["session_id", *GLOBAL_FEATURE_NAMES, "expert_score"])
            for s in ds:
                vec = build_global_vector(s, cfg.global_cfg)
                w.writerow([s.session_id, *[f"{v:.10g}" for v in vec], s.expert_score])
    _write_manifest(out, "featurize", args, {"model": dataclasses.asdict(cfg)},
                    [Path(args.data)] + ([Path(args.config)] if args.config else []))
    print(f"featurized {len(ds)} sessions into {feat_dir}")
    return 0


def _cmd_train(args) -> int:
    raw = _load_config_file(args.config)
    model_cfg = _model_config(raw.get("model", {}))
    train_cfg = _train_config(raw.get("training", {}), seed=args.seed)
    ds = load_sessions(args.data)
    result = split_and_cv(ds, model_cfg, train_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.model.save(out / "model.npz")
    log = {
        "best_point": result.best_point,
        "cv_scores": [{"point": p, "mean_val_r": r} for p, r in result.cv_scores],
        "epoch_loss": result.history,
        "train_ids": result.train_ids,
        "test_ids": result.test_ids,
        "elapsed_s": result.elapsed_s,
    }
    with open(out / "train_log.json", "w") as fh:
        json.dump(log, fh, indent=2)
    with open(out / "eval.json", "w") as fh:
        json.dump(dataclasses.asdict(result.report), fh, indent=2)
    _write_manifest(out, "train", args,
                    {"model": dataclasses.asdict(model_cfg), "training": dataclasses.asdict(train_cfg)},
                    [Path(args.data)] + ([Path(args.config)] if args.config else []))
    print(f"best grid point: {result.best_point}")
    print(f"test set: {result.report.summary()}")
    print(f"model saved to {out / 'model.npz'}")
    return 0


def _predictions(model: SkillModel, ds: Dataset) -> list[tuple[str, float, int | None]]:
    rows = []
    for s in ds:
        score, _ = model.predict_session(s)
        rows.append((s.session_id, score, s.expert_score))
    return rows


def _write_predictions(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["session_id", "predicted_score", "expert_score"])
        for sid, pred, label in rows:
            w.writerow([sid, f"{pred:.6f}", "" if label is None else label])


def _cmd_evaluate(args) -> int:
    model = SkillModel.load(args.model)
    ds = load_sessions(args.data)
    unlabeled = [s.session_id for s in ds if s.expert_score is None]
    if unlabeled:
        raise SessionValidationError(unlabeled[0], ["evaluate needs expert_score on every session"])
    rows = _predictions(model, ds)
    report = metrics([r[1] for r in rows], [r[2] for r in rows])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_predictions(rows, out / "predictions.csv")
    with open(out / "eval.json", "w") as fh:
        json.dump(dataclasses.asdict(report), fh, indent=2)
    _write_manifest(out, "evaluate", args, {}, [Path(args.model), Path(args.data)])
    print(report.summary())
    return 0


def _cmd_predict(args) -> int:
    model = SkillModel.load(args.model)
    ds = load_sessions(args.data)
    rows = _predictions(model, ds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_predictions(rows, out / "predictions.csv")
    _write_manifest(out, "predict", args, {}, [Path(args.model), Path(args.data)])
    print(f"scored {len(rows)} sessions -> {out / 'predictions.csv'}")
    return 0


def _cmd_explain(args) -> int:
    do_temporal = args.temporal or not args.global_
    do_global = args.global_ or not args.temporal
    model = SkillModel.load(args.model)
    ds = load_sessions(args.data)
    targets = ds.sessions
    if args.session:
        targets = [ds.by_id(args.session)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if do_temporal:
        tdir = out / "temporal"
        tdir.mkdir(exist_ok=True)
        segments = {}
        for s in targets:
            rep = temporal_report(s, model, top_k=args.top_k, merge_gap=args.merge_gap)
            write_temporal_csv(rep, tdir / f"{s.session_id}.csv")
            segments[s.session_id] = [
                {"start": seg.start, "end": seg.end, "mass": seg.mass} for seg in rep.segments
            ]
        with open(out / "segments.json", "w") as fh:
            json.dump(segments, fh, indent=2, sort_keys=True)
        print(f"temporal importance for {len(targets)} session(s) -> {tdir}")
    if do_global:
        cfg = ShapConfig(n_samples=args.samples, seed=args.seed)
        attributions = [shap_sampling(model, ds, s, cfg) for s in targets]
        svg = out / "beeswarm.svg" if args.svg else None
        names = export_beeswarm(attributions, out / "beeswarm.csv", svg_path=svg)
        print(f"global attributions for {len(targets)} session(s) -> {out / 'beeswarm.csv'}")
        print("top features: " + ", ".join(names[:3]))
    _write_manifest(out, "explain", args, {"samples": args.samples}, [Path(args.model), Path(args.data)])
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "featurize": _cmd_featurize,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "explain": _cmd_explain,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (SessionParseError, SessionValidationError, FileNotFoundError, ValueError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
