"""Per-fold training, k-fold orchestration, evaluation, and latency
measurement for the three experiment families.

Training follows the published protocol: Adam at 1e-4, batch 128, 15
epochs, class-weighted cross-entropy, and the checkpoint with the lowest
validation loss wins. Everything is seeded; a fixed seed reproduces the
evaluation report byte for byte regardless of worker count.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import (EXPERIMENT_PRESETS, FoldPlan, MaterializedFold,
                      materialize_experiment, parse_experiment)
from .errors import ConfigurationError, DegenerateInputError, ParameterError
from .nnet import (AdamState, Checkpoint, SmallCnnConfig, adam_step,
                   backward_pass, checkpoint_to_bytes, default_config,
                   forward, forward_pass, init_weights,
                   weighted_cross_entropy)

LOSS_KINDS = ("categorical_ce", "binary_ce")


def loss_for_experiment(experiment: str) -> str:
    kind, _ = parse_experiment(experiment)
    return "binary_ce" if kind == "e2" else "categorical_ce"


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; the defaults follow the published protocol."""

    experiment: str
    seed: int = 0
    batch_size: int = 128
    epochs: int = 15
    lr: float = 1e-4
    loss: str = ""

    def __post_init__(self):
        expected = loss_for_experiment(self.experiment)
        if not self.loss:
            object.__setattr__(self, "loss", expected)
        if self.loss not in LOSS_KINDS:
            raise ConfigurationError(f"unknown loss {self.loss!r}")
        if self.loss != expected:
            raise ConfigurationError(
                f"experiment {self.experiment} trains with {expected}, "
                f"not {self.loss}")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        # lr = 0 is allowed: it turns training into a no-op, which the
        # initialization-identity contract relies on
        if not math.isfinite(self.lr) or self.lr < 0:
            raise ConfigurationError("lr must be finite and >= 0")


def _dataset_loss(params: dict, cfg: SmallCnnConfig, x: np.ndarray,
                  y: np.ndarray, eye: np.ndarray, weight_vec: np.ndarray,
                  batch_size: int) -> float:
    total = 0.0
    for lo in range(0, x.shape[0], batch_size):
        xb = x[lo:lo + batch_size]
        probs = forward_pass(params, cfg, xb)
        total += weighted_cross_entropy(probs, eye[y[lo:lo + batch_size]],
                                        weight_vec) * xb.shape[0]
    return total / x.shape[0]


def train_fold(data: MaterializedFold, cfg: TrainConfig,
               model_cfg: SmallCnnConfig | None = None,
               class_weights: np.ndarray | None = None) -> Checkpoint:
    """Train one fold; returns the epoch checkpoint with minimum val loss.

    `class_weights` overrides the weights materialized with the fold
    (`np.ones(k)` gives the unweighted baseline).
    """
    if data.experiment != cfg.experiment:
        raise ConfigurationError(
            f"fold was materialized for {data.experiment}, "
            f"config says {cfg.experiment}")
    if data.train_x.shape[0] == 0 or data.val_x.shape[0] == 0:
        raise DegenerateInputError("training and validation splits must be nonempty")
    k = len(data.class_names)
    if model_cfg is None:
        model_cfg = default_config(data.train_x.shape[2], k)
    if model_cfg.num_classes != k:
        raise ConfigurationError(
            f"model expects {model_cfg.num_classes} classes, fold has {k}")
    if tuple(model_cfg.input_shape) != data.train_x.shape[1:]:
        raise ConfigurationError(
            f"model input {tuple(model_cfg.input_shape)} does not match "
            f"fold features {data.train_x.shape[1:]}")
    if class_weights is None:
        weight_vec = data.weights.vector(data.class_names).astype(np.float32)
    else:
        weight_vec = np.asarray(class_weights, dtype=np.float32)
        if weight_vec.shape != (k,):
            raise ParameterError(f"class_weights must have shape ({k},)")

    params = init_weights(model_cfg, cfg.seed)
    state = AdamState.like(params)
    rng = np.random.default_rng([cfg.seed, data.fold])
    eye = np.eye(k, dtype=np.float32)
    n = data.train_x.shape[0]

    best_loss = math.inf
    best_epoch = 0
    best_weights = {name: p.copy() for name, p in params.items()}
    curve = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            _, _, grads = backward_pass(params, model_cfg, data.train_x[idx],
                                        eye[data.train_y[idx]], weight_vec)
            step += 1
            adam_step(params, grads, state, cfg.lr, t=step)
        val_loss = _dataset_loss(params, model_cfg, data.val_x, data.val_y,
                                 eye, weight_vec, cfg.batch_size)
        curve.append(val_loss)
        if val_loss < best_loss:  # strict: a tie keeps the earlier epoch
            best_loss = val_loss
            best_epoch = epoch
            best_weights = {name: p.copy() for name, p in params.items()}

    meta = {
        "experiment": cfg.experiment,
        "fold": data.fold,
        "epoch": best_epoch,
        "val_loss": best_loss,
        "seed": cfg.seed,
        "config_digest": model_cfg.digest(),
        "val_loss_curve": curve,
    }
    return Checkpoint(config=model_cfg, weights=best_weights,
                      training_meta=meta, class_names=list(data.class_names))


# ---------------------------------------------------------------------------
# Evaluation.

@dataclass
class EvalResult:
    confusion: np.ndarray  # [pred, target]
    accuracy: float


def evaluate_predictions(predicted, target, num_classes: int) -> EvalResult:
    """Confusion matrix (rows = predicted, columns = target) and accuracy."""
    pred = np.asarray(predicted, dtype=np.int64)
    targ = np.asarray(target, dtype=np.int64)
    if pred.size == 0:
        raise DegenerateInputError("empty evaluation set")
    if pred.shape != targ.shape:
        raise ParameterError("prediction and target counts differ")
    if pred.min() < 0 or pred.max() >= num_classes or \
            targ.min() < 0 or targ.max() >= num_classes:
        raise ParameterError("labels outside [0, num_classes)")
    conf = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(conf, (pred, targ), 1)
    return EvalResult(confusion=conf,
                      accuracy=float(np.trace(conf)) / float(conf.sum()))


def evaluate(ckpt: Checkpoint, x: np.ndarray, y: np.ndarray,
             batch_size: int = 128) -> EvalResult:
    """Argmax evaluation of a checkpoint; ties resolve to the lowest index."""
    if x.shape[0] == 0:
        raise DegenerateInputError("empty evaluation set")
    preds = np.empty(x.shape[0], dtype=np.int64)
    for lo in range(0, x.shape[0], batch_size):
        probs = forward(ckpt, x[lo:lo + batch_size])
        preds[lo:lo + batch_size] = probs.argmax(axis=1)
    return evaluate_predictions(preds, y, ckpt.config.num_classes)


def summarize_accuracies(accuracies) -> dict:
    """Mean/min/max and quartiles, the box-plot summary of fold accuracy."""
    a = np.asarray(accuracies, dtype=np.float64)
    if a.size == 0:
        raise DegenerateInputError("no fold accuracies to summarize")
    q25, q50, q75 = np.percentile(a, [25.0, 50.0, 75.0])
    return {"mean": float(a.mean()), "min": float(a.min()),
            "max": float(a.max()), "q25": float(q25), "q50": float(q50),
            "q75": float(q75)}


@dataclass
class EvalReport:
    experiment: str
    k: int
    seed: int
    model_digest: str
    per_fold: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "experiment": self.experiment,
            "k": self.k,
            "seed": self.seed,
            "model_digest": self.model_digest,
            "per_fold": self.per_fold,
            "summary": self.summary,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        doc = json.loads(text)
        return cls(experiment=doc["experiment"], k=doc["k"], seed=doc["seed"],
                   model_digest=doc["model_digest"], per_fold=doc["per_fold"],
                   summary=doc["summary"])


def cross_validate(samples, plan: FoldPlan, cfg: TrainConfig,
                   model_cfg: SmallCnnConfig | None = None, jobs: int = 1,
                   audio_root=None, checkpoint_hook=None) -> EvalReport:
    """Train and evaluate every fold of the plan.

    Feature stacks are shared across folds through one in-memory cache, so
    each sample's audio is decoded and expanded exactly once. When given,
    `checkpoint_hook(fold, ckpt)` is invoked with each fold's checkpoint.
    """
    kind, _ = parse_experiment(cfg.experiment)
    preset = EXPERIMENT_PRESETS[kind]
    cache: dict = {}
    per_fold = []
    digest = ""
    for fold in range(plan.k):
        data = materialize_experiment(samples, plan, fold, cfg.experiment,
                                      preset, cfg.seed, jobs=jobs,
                                      audio_root=audio_root, cache=cache)
        ckpt = train_fold(data, cfg, model_cfg)
        digest = ckpt.training_meta["config_digest"]
        res = evaluate(ckpt, data.test_x, data.test_y, cfg.batch_size)
        per_fold.append({
            "fold": fold,
            "accuracy": res.accuracy,
            "confusion": res.confusion.tolist(),
            "val_loss_curve": ckpt.training_meta["val_loss_curve"],
            "best_epoch": ckpt.training_meta["epoch"],
        })
        if checkpoint_hook is not None:
            checkpoint_hook(fold, ckpt)
    summary = summarize_accuracies([f["accuracy"] for f in per_fold])
    return EvalReport(experiment=cfg.experiment, k=plan.k, seed=cfg.seed,
                      model_digest=digest, per_fold=per_fold, summary=summary)


def export_confusion_csv(report: EvalReport, path) -> None:
    """One row per (fold, predicted class); columns are target classes."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        n = len(report.per_fold[0]["confusion"]) if report.per_fold else 0
        w.writerow(["fold", "predicted"] + [f"target_{j}" for j in range(n)])
        for entry in report.per_fold:
            for i, row in enumerate(entry["confusion"]):
                w.writerow([entry["fold"], i] + list(row))


# ---------------------------------------------------------------------------
# Latency.

@dataclass
class LatencyReport:
    model: str
    mean_ms: float
    std_ms: float
    batch: int
    warmup: int
    iters: int
    checkpoint_bytes: int
    times_ms: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"model": self.model, "mean_ms": self.mean_ms,
                "std_ms": self.std_ms, "batch": self.batch,
                "warmup": self.warmup, "iters": self.iters,
                "checkpoint_bytes": self.checkpoint_bytes,
                "times_ms": self.times_ms}


def benchmark_latency(ckpt: Checkpoint, warmup: int = 10,
                      iters: int = 50) -> LatencyReport:
    """Single-input inference timing on synthetic feature maps.

    Floors of 10 warmups and 50 timed iterations keep the statistics
    meaningful on noisy shared hardware.
    """
    if iters < 1 or warmup < 0:
        raise ParameterError("need iters >= 1 and warmup >= 0")
    warmup = max(warmup, 10)
    iters = max(iters, 50)
    rng = np.random.default_rng(0)
    shape = (1,) + tuple(ckpt.config.input_shape)
    batch = rng.uniform(-80.0, 0.0, size=shape).astype(np.float32)
    for _ in range(warmup):
        forward(ckpt, batch)
    times = []
    for _ in range(iters):
        t0 = time.perf_counter()
        forward(ckpt, batch)
        times.append((time.perf_counter() - t0) * 1000.0)
    arr = np.asarray(times)
    meta = ckpt.training_meta
    name = f"{meta.get('experiment', 'model')}-fold{meta.get('fold', '?')}" \
           f"-{meta.get('config_digest', '')[:8]}"
    return LatencyReport(model=name, mean_ms=float(arr.mean()),
                         std_ms=float(arr.std()), batch=1, warmup=warmup,
                         iters=iters,
                         checkpoint_bytes=len(checkpoint_to_bytes(ckpt)),
                         times_ms=[float(t) for t in times])
