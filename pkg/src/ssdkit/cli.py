"""Command-line entry point.

One binary, subcommand style: extract, fold, train, eval, bench, synth,
serve. Values resolve as flag > SSD_SEED (seed only) > config file >
default, and every run logs the resolved configuration to the output
directory. Exit codes: 0 ok, 1 I/O, 2 validation, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib

from . import __version__
from .dataset import (
    EXPERIMENT_PRESETS,
    FeatureStore,
    FoldPlan,
    build_folds,
    consistency_filter,
    materialize_experiment,
    parse_experiment,
    parse_manifest,
    synth_corpus,
)
from .errors import PipelineError, ValidationError
from .features import PRESET_FRAMES
from .nnet import load_checkpoint, save_checkpoint
from .trainer import (
    EvalReport,
    LatencyReport,
    TrainConfig,
    benchmark_latency,
    cross_validate,
    evaluate,
    export_confusion_csv,
    train_fold,
)

_DEFAULTS = {
    "seed": 0, "jobs": 1, "k": 5, "variants": 9,
    "batch_size": 128, "epochs": 15, "lr": 1e-4,
}


@dataclass
class PipelineConfig:
    """Resolved per-run settings; validated before any work starts."""

    command: str
    manifest: str = ""
    audio_root: str = ""
    out: str = ""
    preset: str = ""
    experiment: str = ""
    seed: int = 0
    jobs: int = 1
    k: int = 5
    variants: int = 9
    batch_size: int = 128
    epochs: int = 15
    lr: float = 1e-4
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.preset and self.preset not in PRESET_FRAMES:
            raise ValidationError(f"unknown feature preset {self.preset!r}")
        if self.experiment:
            parse_experiment(self.experiment)
        if self.jobs < 1:
            raise ValidationError("jobs must be >= 1")
        if self.k < 2:
            raise ValidationError("k must be >= 2")
        if not 1 <= self.variants <= 9:
            raise ValidationError("variants must lie in [1, 9]")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValidationError("batch_size and epochs must be >= 1")
        if not self.lr >= 0:
            raise ValidationError("lr must be finite and >= 0")


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    known = set(PipelineConfig.__dataclass_fields__) | {
        "imbalance", "classes", "per_class", "task", "fold", "host", "port"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
    return doc


def _resolve(args: argparse.Namespace, file_cfg: dict) -> PipelineConfig:
    """flag > SSD_SEED (seed only) > config file > default."""
    values: dict = {}
    for name in PipelineConfig.__dataclass_fields__:
        if name in ("command", "extra"):
            continue
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
        elif name == "seed" and os.environ.get("SSD_SEED"):
            values[name] = int(os.environ["SSD_SEED"])
        elif name in file_cfg:
            values[name] = file_cfg[name]
        elif name in _DEFAULTS:
            values[name] = _DEFAULTS[name]
    cfg = PipelineConfig(command=args.command, **values)
    cfg.validate()
    return cfg


def _log_run(cfg: PipelineConfig, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    doc = {k: v for k, v in asdict(cfg).items() if v not in ("", {}, None)}
    doc["version"] = __version__
    with open(os.path.join(out_dir, "run_config.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def _load_inputs(cfg: PipelineConfig, plan_path: str):
    samples = parse_manifest(cfg.manifest)
    with open(plan_path, encoding="utf-8") as fh:
        plan = FoldPlan.from_json(fh.read())
    root = cfg.audio_root or os.path.dirname(os.path.abspath(cfg.manifest))
    return samples, plan, root


def _print_report(report: EvalReport) -> None:
    print(f"experiment {report.experiment}  k={report.k}  seed={report.seed}")
    print(f"{'fold':>4}  {'accuracy':>8}  {'best_epoch':>10}")
    for entry in report.per_fold:
        print(f"{entry['fold']:>4}  {entry['accuracy']:>8.4f}  {entry['best_epoch']:>10}")
    s = report.summary
    print(f"mean {s['mean']:.4f}  min {s['min']:.4f}  q25 {s['q25']:.4f}  "
          f"q50 {s['q50']:.4f}  q75 {s['q75']:.4f}  max {s['max']:.4f}")


def _print_latency(rep: LatencyReport) -> None:
    print(f"model {rep.model}  batch {rep.batch}")
    print(f"mean {rep.mean_ms:.2f} ms  std {rep.std_ms:.2f} ms  "
          f"({rep.iters} iters after {rep.warmup} warmups)")
    print(f"checkpoint {rep.checkpoint_bytes} bytes")


# ---------------------------------------------------------------------------
# Subcommands. Each returns a process exit code.

def cmd_extract(cfg: PipelineConfig) -> int:
    samples = parse_manifest(cfg.manifest)
    root = cfg.audio_root or os.path.dirname(os.path.abspath(cfg.manifest))
    _log_run(cfg, cfg.out)
    store = FeatureStore(root=cfg.out, preset=cfg.preset, master_seed=cfg.seed)
    computed, skipped = store.ensure(samples, n_variants=cfg.variants,
                                     jobs=cfg.jobs, audio_root=root)
    print(f"extracted {computed}, skipped {skipped} (of {len(samples)}) -> {cfg.out}")
    return 0


def cmd_fold(cfg: PipelineConfig) -> int:
    samples = parse_manifest(cfg.manifest)
    if not cfg.extra.get("keep_disagreements"):
        samples = consistency_filter(samples)
    plan = build_folds(samples, k=cfg.k, seed=cfg.seed)
    out_dir = os.path.dirname(os.path.abspath(cfg.out))
    _log_run(cfg, out_dir)
    with open(cfg.out, "w", encoding="utf-8") as fh:
        fh.write(plan.to_json())
    print(f"fold plan: {len(plan.sample_order)} samples over {plan.k} folds -> {cfg.out}")
    return 0


def cmd_train(cfg: PipelineConfig) -> int:
    samples, plan, root = _load_inputs(cfg, cfg.extra["plan"])
    fold = cfg.extra["fold"]
    kind, _ = parse_experiment(cfg.experiment)
    _log_run(cfg, cfg.out)
    data = materialize_experiment(samples, plan, fold, cfg.experiment,
                                  EXPERIMENT_PRESETS[kind], cfg.seed,
                                  jobs=cfg.jobs, audio_root=root)
    tcfg = TrainConfig(experiment=cfg.experiment, seed=cfg.seed,
                       batch_size=cfg.batch_size, epochs=cfg.epochs, lr=cfg.lr)
    ckpt = train_fold(data, tcfg)
    res = evaluate(ckpt, data.test_x, data.test_y, cfg.batch_size)
    ckpt_path = os.path.join(cfg.out, f"{cfg.experiment}_fold{fold}.ssdm")
    save_checkpoint(ckpt, ckpt_path)
    fold_report = {"experiment": cfg.experiment, "fold": fold,
                   "accuracy": res.accuracy, "confusion": res.confusion.tolist(),
                   "best_epoch": ckpt.training_meta["epoch"],
                   "val_loss": ckpt.training_meta["val_loss"]}
    with open(os.path.join(cfg.out, f"{cfg.experiment}_fold{fold}.json"),
              "w", encoding="utf-8") as fh:
        json.dump(fold_report, fh, indent=2, sort_keys=True)
    print(f"fold {fold} accuracy {res.accuracy:.4f} -> {ckpt_path}")
    return 0


def cmd_eval(cfg: PipelineConfig) -> int:
    samples, plan, root = _load_inputs(cfg, cfg.extra["plan"])
    _log_run(cfg, cfg.out)
    if cfg.extra.get("all_folds"):
        tcfg = TrainConfig(experiment=cfg.experiment, seed=cfg.seed,
                           batch_size=cfg.batch_size, epochs=cfg.epochs, lr=cfg.lr)
        hook = None
        if cfg.extra.get("save_checkpoints"):
            def hook(fold, ckpt):
                save_checkpoint(ckpt, os.path.join(
                    cfg.out, f"{cfg.experiment}_fold{fold}.ssdm"))
        report = cross_validate(samples, plan, tcfg, jobs=cfg.jobs,
                                audio_root=root, checkpoint_hook=hook)
        base = os.path.join(cfg.out, f"report_{cfg.experiment}")
        with open(base + ".json", "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
        export_confusion_csv(report, base + ".csv")
        _print_report(report)
        return 0
    ckpt = load_checkpoint(cfg.extra["checkpoint"])
    experiment = ckpt.training_meta.get("experiment", cfg.experiment)
    fold = cfg.extra.get("fold")
    if fold is None:
        fold = int(ckpt.training_meta.get("fold", 0))
    kind, _ = parse_experiment(experiment)
    data = materialize_experiment(samples, plan, fold, experiment,
                                  EXPERIMENT_PRESETS[kind], cfg.seed,
                                  jobs=cfg.jobs, audio_root=root)
    res = evaluate(ckpt, data.test_x, data.test_y, cfg.batch_size)
    print(f"experiment {experiment}  fold {fold}  accuracy {res.accuracy:.4f}")
    for i, row in enumerate(res.confusion.tolist()):
        print(f"  predicted {i}: {row}")
    return 0


def cmd_bench(cfg: PipelineConfig) -> int:
    ckpt = load_checkpoint(cfg.extra["checkpoint"])
    rep = benchmark_latency(ckpt, warmup=cfg.extra["warmup"],
                            iters=cfg.extra["iters"])
    _print_latency(rep)
    if cfg.out:
        _log_run(cfg, cfg.out)
        with open(os.path.join(cfg.out, "latency.json"), "w", encoding="utf-8") as fh:
            json.dump(rep.to_dict(), fh, indent=2, sort_keys=True)
    return 0


def cmd_synth(cfg: PipelineConfig) -> int:
    _log_run(cfg, cfg.out)
    manifest = synth_corpus(cfg.out, classes=cfg.extra["classes"],
                            per_class=cfg.extra["per_class"], seed=cfg.seed,
                            task=cfg.extra["task"],
                            imbalance=cfg.extra["imbalance"])
    n = len(parse_manifest(manifest))
    print(f"synthesized {n} samples -> {manifest}")
    return 0


def cmd_serve(cfg: PipelineConfig) -> int:
    import uvicorn

    from .service import create_app

    ckpt = load_checkpoint(cfg.extra["checkpoint"]) if cfg.extra.get("checkpoint") else None
    app = create_app(checkpoint=ckpt, store_path=cfg.extra.get("store"),
                     donate_dir=cfg.extra.get("donate_dir"),
                     static_dir=cfg.extra.get("static"))
    uvicorn.run(app, host=cfg.extra["host"], port=cfg.extra["port"])
    return 0


# ---------------------------------------------------------------------------
# Argument plumbing.

def _add_common(p: argparse.ArgumentParser, *names: str) -> None:
    if "config" in names:
        p.add_argument("--config", help="TOML file supplying defaults for any flag")
    if "seed" in names:
        p.add_argument("--seed", type=int, help="master seed (SSD_SEED overrides the file value)")
    if "jobs" in names:
        p.add_argument("--jobs", type=int, help="worker-pool width for extraction")
    if "manifest" in names:
        p.add_argument("--manifest", help="corpus manifest CSV")
    if "audio-root" in names:
        p.add_argument("--audio-root", dest="audio_root",
                       help="base directory for relative audio paths (default: manifest dir)")
    if "train" in names:
        p.add_argument("--experiment", help="e1 | e2:<category> | e3")
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)


def build_parser() -> argparse.ArgumentParser:
    root = argparse.ArgumentParser(
        prog="ssdkit",
        description="Speech-sound-disorder screening pipeline: features, folds, training, serving.")
    root.add_argument("--version", action="version", version=f"ssdkit {__version__}")
    sub = root.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract and store feature stacks for a manifest")
    _add_common(p, "config", "seed", "jobs", "manifest", "audio-root")
    p.add_argument("--preset", choices=sorted(PRESET_FRAMES), help="feature preset")
    p.add_argument("--variants", type=int, help="augmented variants per sample (1-9)")
    p.add_argument("--out", help="feature store directory")
    p.set_defaults(func=cmd_extract, needs=("manifest", "preset", "out"))

    p = sub.add_parser("fold", help="build a subject-grouped stratified fold plan")
    _add_common(p, "config", "seed", "manifest")
    p.add_argument("--k", type=int, help="number of folds")
    p.add_argument("--keep-disagreements", action="store_true",
                   help="skip the two-rater consistency filter")
    p.add_argument("--out", help="fold plan JSON path")
    p.set_defaults(func=cmd_fold, needs=("manifest", "out"))

    p = sub.add_parser("train", help="train one fold and save its checkpoint")
    _add_common(p, "config", "seed", "jobs", "manifest", "audio-root", "train")
    p.add_argument("--plan", help="fold plan JSON from `fold`")
    p.add_argument("--fold", type=int, help="fold index to train")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_train, needs=("manifest", "experiment", "plan", "fold", "out"))

    p = sub.add_parser("eval", help="evaluate a checkpoint or cross-validate all folds")
    _add_common(p, "config", "seed", "jobs", "manifest", "audio-root", "train")
    p.add_argument("--plan", help="fold plan JSON from `fold`")
    p.add_argument("--all-folds", dest="all_folds", action="store_true",
                   help="train and evaluate every fold; emit a full report")
    p.add_argument("--save-checkpoints", dest="save_checkpoints", action="store_true",
                   help="with --all-folds, save each fold's checkpoint")
    p.add_argument("--checkpoint", help="evaluate this checkpoint on its held-out fold")
    p.add_argument("--fold", type=int, help="override the checkpoint's fold index")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_eval, needs=("manifest", "plan", "out"))

    p = sub.add_parser("bench", help="measure single-input inference latency")
    _add_common(p, "config")
    p.add_argument("--checkpoint", help="checkpoint to benchmark")
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--out", help="optional directory for latency.json")
    p.set_defaults(func=cmd_bench, needs=("checkpoint",))

    p = sub.add_parser("synth", help="generate the synthetic stand-in corpus")
    _add_common(p, "config", "seed")
    p.add_argument("--classes", type=int, default=4, choices=(2, 4))
    p.add_argument("--per-class", dest="per_class", type=int, default=100)
    p.add_argument("--task", choices=("character", "phrase"), default="character")
    p.add_argument("--imbalance", type=float, default=0.0,
                   help="majority:minority ratio for the binary corpus")
    p.add_argument("--out", help="corpus output directory")
    p.set_defaults(func=cmd_synth, needs=("out",))

    p = sub.add_parser("serve", help="run the screening HTTP service")
    _add_common(p, "config")
    p.add_argument("--checkpoint", help="model to serve (absent: predictions return 503)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--store", help="session store JSONL path")
    p.add_argument("--donate-dir", dest="donate_dir",
                   help="directory for donated recordings")
    p.add_argument("--static", help="built UI bundle to serve at /")
    p.set_defaults(func=cmd_serve, needs=())
    return root


_EXTRA_KEYS = ("plan", "fold", "all_folds", "save_checkpoints", "checkpoint",
               "warmup", "iters", "classes", "per_class", "task", "imbalance",
               "host", "port", "store", "donate_dir", "static",
               "keep_disagreements")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_cfg = _load_config_file(getattr(args, "config", None))
        cfg = _resolve(args, file_cfg)
        for key in _EXTRA_KEYS:
            if hasattr(args, key):
                val = getattr(args, key)
                if val is None and key in file_cfg:
                    val = file_cfg[key]
                cfg.extra[key] = val
        missing = [n for n in args.needs
                   if not getattr(cfg, n, None) and cfg.extra.get(n) is None]
        if missing:
            raise ValidationError(
                f"{args.command} requires --{missing[0].replace('_', '-')}")
        return args.func(cfg)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
