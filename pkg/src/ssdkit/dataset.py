"""Manifest parsing, label filtering, fold construction, class weights,
and materialization of per-fold training data.

The clinical recordings behind the original corpus are private; a
synthetic tone-band generator produces stand-in corpora with the same
manifest schema for tests and demos.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .audio_io import AudioClip, load_wav, resample, save_wav
from .augment import expand_nine_fold
from .errors import DegenerateInputError, ValidationError
from .features import PRESET_FRAMES, extract_preset
from .phrases import PHRASE_IDS, PHRASES

ERROR_CATEGORIES = ("stopping", "backing", "fcdp", "affrication")
CORRECT_LABEL = "correct"
LABEL_VOCAB = ERROR_CATEGORIES + (CORRECT_LABEL,)

BINARY_CLASSES = ("incorrect", "correct")

MANIFEST_FIELDS = (
    "sample_id", "subject_id", "age", "sex", "phrase_id",
    "char_index", "audio_path", "slp1", "slp2", "duration_s",
)

PIPELINE_RATE_HZ = 44100
MAX_DURATION_S = 3.0


@dataclass
class SpeechSample:
    sample_id: str
    subject_id: str
    age: int
    sex: str
    phrase_id: str
    char_index: int | None
    audio_path: str
    slp1: str
    slp2: str
    duration_s: float

    @property
    def consistent(self) -> bool:
        return self.slp1 == self.slp2

    @property
    def label(self) -> str:
        if not self.consistent:
            raise ValidationError(
                f"sample {self.sample_id} has disagreeing annotations")
        return self.slp1


def parse_manifest(path) -> list[SpeechSample]:
    """Read and validate the corpus manifest CSV."""
    samples: list[SpeechSample] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError("manifest has no header row")
        if tuple(header) != MANIFEST_FIELDS:
            raise ValidationError(
                f"manifest header must be {','.join(MANIFEST_FIELDS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(MANIFEST_FIELDS):
                raise ValidationError(f"row {lineno}: expected "
                                      f"{len(MANIFEST_FIELDS)} fields, got {len(row)}")
            rec = dict(zip(MANIFEST_FIELDS, (c.strip() for c in row)))
            samples.append(_validate_row(rec, lineno, seen))
    return samples


def _validate_row(rec: dict, lineno: int, seen: set) -> SpeechSample:
    where = f"row {lineno}"
    if not rec["sample_id"]:
        raise ValidationError(f"{where}: empty sample_id")
    if rec["sample_id"] in seen:
        raise ValidationError(f"{where}: duplicate sample_id {rec['sample_id']!r}")
    seen.add(rec["sample_id"])
    try:
        age = int(rec["age"])
        duration = float(rec["duration_s"])
    except ValueError as exc:
        raise ValidationError(f"{where}: {exc}") from None
    if age < 0:
        raise ValidationError(f"{where}: negative age")
    if rec["sex"] not in ("F", "M"):
        raise ValidationError(f"{where}: sex must be F or M")
    if rec["phrase_id"] not in PHRASE_IDS:
        raise ValidationError(f"{where}: unknown phrase_id {rec['phrase_id']!r}")
    char_index: int | None = None
    if rec["char_index"]:
        try:
            char_index = int(rec["char_index"])
        except ValueError:
            raise ValidationError(f"{where}: char_index must be an integer") from None
        if char_index < 0:
            raise ValidationError(f"{where}: negative char_index")
    for k in ("slp1", "slp2"):
        if rec[k] not in LABEL_VOCAB:
            raise ValidationError(
                f"{where}: {k} must be one of {','.join(LABEL_VOCAB)}; "
                f"got {rec[k]!r}")
    if not 0.0 < duration < MAX_DURATION_S:
        raise ValidationError(f"{where}: duration_s must lie in (0, {MAX_DURATION_S})")
    return SpeechSample(
        sample_id=rec["sample_id"], subject_id=rec["subject_id"], age=age,
        sex=rec["sex"], phrase_id=rec["phrase_id"], char_index=char_index,
        audio_path=rec["audio_path"], slp1=rec["slp1"], slp2=rec["slp2"],
        duration_s=duration)


def subject_demographics(samples) -> dict:
    by_subject = {}
    for s in samples:
        by_subject[s.subject_id] = s.sex
    sexes = list(by_subject.values())
    return {"subjects": len(by_subject),
            "F": sexes.count("F"),
            "M": sexes.count("M")}


def consistency_filter(samples) -> list[SpeechSample]:
    """Keep only samples whose two annotations agree."""
    return [s for s in samples if s.consistent]


# ---------------------------------------------------------------------------
# Fold construction.

@dataclass
class FoldPlan:
    k: int
    seed: int
    assignments: dict  # sample_id -> its held-out fold
    sample_order: tuple  # manifest order, for stable iteration

    def fold_ids(self, fold: int) -> list[str]:
        return [sid for sid in self.sample_order if self.assignments[sid] == fold]

    def test_ids(self, fold: int) -> list[str]:
        return self.fold_ids(fold)

    def val_ids(self, fold: int) -> list[str]:
        # the held-out fold doubles as the validation split (see README)
        return self.fold_ids(fold)

    def train_ids(self, fold: int) -> list[str]:
        return [sid for sid in self.sample_order if self.assignments[sid] != fold]

    def train_val_split(self, fold: int) -> dict:
        val = set(self.fold_ids(fold))
        return {sid: ("val" if sid in val else "train") for sid in self.sample_order}

    def to_json(self) -> str:
        doc = {"version": 1, "k": self.k, "seed": self.seed,
               "assignments": self.assignments,
               "sample_order": list(self.sample_order)}
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FoldPlan":
        doc = json.loads(text)
        if doc.get("version") != 1:
            raise ValidationError("unsupported fold plan version")
        return cls(k=doc["k"], seed=doc["seed"],
                   assignments={k: int(v) for k, v in doc["assignments"].items()},
                   sample_order=tuple(doc["sample_order"]))


def build_folds(samples, k: int = 5, seed: int = 0) -> FoldPlan:
    """Stratified k-fold assignment; per class, remainders land on the last folds."""
    if k < 2:
        raise ValidationError("k must be >= 2")
    by_class: dict = {}
    for s in samples:
        by_class.setdefault(s.label, []).append(s.sample_id)
    rng = np.random.default_rng(seed)
    assignments: dict = {}
    for label in sorted(by_class):
        ids = by_class[label]
        n = len(ids)
        if n < k:
            raise ValidationError(
                f"class {label!r} has {n} samples; stratifying into {k} folds needs >= {k}")
        perm = rng.permutation(n)
        base, rem = divmod(n, k)
        start = 0
        for fold in range(k):
            size = base + (1 if fold >= k - rem else 0)
            for j in perm[start:start + size]:
                assignments[ids[j]] = fold
            start += size
    return FoldPlan(k=k, seed=seed, assignments=assignments,
                    sample_order=tuple(s.sample_id for s in samples))


# ---------------------------------------------------------------------------
# Class weights.

@dataclass
class ClassWeights:
    weights: dict

    def vector(self, class_names) -> np.ndarray:
        return np.array([self.weights[c] for c in class_names], dtype=np.float64)


def compute_class_weights(counts: dict) -> ClassWeights:
    """Inverse-frequency weights: w_c = N / (K * n_c)."""
    if not counts:
        raise DegenerateInputError("no class counts given")
    if any(n <= 0 for n in counts.values()):
        raise DegenerateInputError("every class count must be positive")
    total = sum(counts.values())
    k = len(counts)
    return ClassWeights({c: total / (k * n) for c, n in counts.items()})


# ---------------------------------------------------------------------------
# Experiment materialization.

EXPERIMENT_PRESETS = {"e1": "phrase", "e2": "character", "e3": "character"}


def parse_experiment(text: str) -> tuple:
    """'e1' | 'e3' | 'e2:<category>' -> (kind, category or None)."""
    t = text.strip().lower()
    if t in ("e1", "e3"):
        return t, None
    if t.startswith("e2:"):
        cat = t[3:]
        if cat not in ERROR_CATEGORIES:
            raise ValidationError(f"unknown category {cat!r} for a binary experiment")
        return "e2", cat
    raise ValidationError(f"experiment must be e1, e3, or e2:<category>; got {text!r}")


def experiment_samples(samples, experiment: str):
    """Samples and class names for one experiment, with integer labels."""
    kind, category = parse_experiment(experiment)
    picked: list = []
    labels: list = []
    if kind == "e1":
        class_names = ERROR_CATEGORIES
        for s in samples:
            if s.char_index is None and s.label in ERROR_CATEGORIES:
                picked.append(s)
                labels.append(ERROR_CATEGORIES.index(s.label))
    elif kind == "e3":
        class_names = ERROR_CATEGORIES
        for s in samples:
            if s.char_index is not None and s.label in ERROR_CATEGORIES:
                picked.append(s)
                labels.append(ERROR_CATEGORIES.index(s.label))
    else:
        class_names = BINARY_CLASSES
        for s in samples:
            if s.char_index is None:
                continue
            if s.label == category:
                picked.append(s)
                labels.append(0)
            elif s.label == CORRECT_LABEL:
                picked.append(s)
                labels.append(1)
    return picked, np.array(labels, dtype=np.int64), class_names


@dataclass
class MaterializedFold:
    fold: int
    experiment: str
    class_names: tuple
    weights: ClassWeights
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray


def _sample_feature_stack(args):
    """All requested feature variants of one sample: [n, 128, T, 3] float32."""
    sample_id, wav_path, preset, master_seed, n_variants = args
    clip = load_wav(wav_path)
    if clip.sample_rate_hz != PIPELINE_RATE_HZ:
        clip = resample(clip, PIPELINE_RATE_HZ)
    if n_variants == 1:
        clips = [clip]
    else:
        clips = expand_nine_fold(clip, sample_id, master_seed)[:n_variants]
    maps = [extract_preset(c, preset, sample_id).values for c in clips]
    return np.stack(maps)


def compute_feature_stacks(samples, preset: str, master_seed: int,
                           n_variants: int = 9, jobs: int = 1,
                           audio_root=None, cache: dict | None = None) -> dict:
    """sample_id -> [n_variants, 128, T, 3] float32, in manifest order.

    Results are keyed per sample and independent of worker count.
    """
    todo = []
    for s in samples:
        if cache is not None and s.sample_id in cache:
            continue
        path = s.audio_path
        if audio_root is not None and not os.path.isabs(path):
            path = os.path.join(audio_root, path)
        if not os.path.exists(path):
            raise ValidationError(f"audio file missing for sample {s.sample_id}: {path}")
        todo.append((s.sample_id, path, preset, master_seed, n_variants))
    out = cache if cache is not None else {}
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for args, stack in zip(todo, pool.map(_sample_feature_stack, todo, chunksize=8)):
                out[args[0]] = stack
    else:
        for args in todo:
            out[args[0]] = _sample_feature_stack(args)
    return out


def materialize_experiment(samples, plan: FoldPlan, fold: int, experiment: str,
                           feature_preset: str, master_seed: int,
                           jobs: int = 1, audio_root=None,
                           cache: dict | None = None) -> MaterializedFold:
    """Per-fold tensors: train expanded 9x, val/test left untouched."""
    if not 0 <= fold < plan.k:
        raise ValidationError(f"fold must lie in [0, {plan.k})")
    kind, _ = parse_experiment(experiment)
    if EXPERIMENT_PRESETS[kind] != feature_preset:
        raise ValidationError(
            f"experiment {experiment} expects the {EXPERIMENT_PRESETS[kind]!r} preset")
    picked, labels, class_names = experiment_samples(samples, experiment)
    if not picked:
        raise ValidationError(f"no samples match experiment {experiment}")
    missing = [s.sample_id for s in picked if s.sample_id not in plan.assignments]
    if missing:
        raise ValidationError(
            f"{len(missing)} samples absent from the fold plan (first: {missing[0]})")
    label_of = {s.sample_id: int(y) for s, y in zip(picked, labels)}
    train = [s for s in picked if plan.assignments[s.sample_id] != fold]
    held = [s for s in picked if plan.assignments[s.sample_id] == fold]

    stacks = compute_feature_stacks(train, feature_preset, master_seed,
                                    n_variants=9, jobs=jobs,
                                    audio_root=audio_root, cache=cache)
    held_stacks = compute_feature_stacks(
        held, feature_preset, master_seed,
        n_variants=9 if cache is not None else 1,
        jobs=jobs, audio_root=audio_root, cache=cache)

    t_frames = PRESET_FRAMES[feature_preset]
    train_x = np.empty((9 * len(train), 128, t_frames, 3), dtype=np.float32)
    train_y = np.empty(9 * len(train), dtype=np.int64)
    for i, s in enumerate(train):
        train_x[9 * i:9 * i + 9] = stacks[s.sample_id][:9]
        train_y[9 * i:9 * i + 9] = label_of[s.sample_id]
    held_x = np.stack([held_stacks[s.sample_id][0] for s in held]) if held else \
        np.empty((0, 128, t_frames, 3), dtype=np.float32)
    held_y = np.array([label_of[s.sample_id] for s in held], dtype=np.int64)

    seg_counts: dict = {}
    for y in train_y.tolist():
        name = class_names[y]
        seg_counts[name] = seg_counts.get(name, 0) + 1
    if len(seg_counts) != len(class_names):
        absent = [c for c in class_names if c not in seg_counts]
        raise DegenerateInputError(
            f"fold {fold} training split is missing class(es): {', '.join(absent)}")
    weights = compute_class_weights(seg_counts)

    return MaterializedFold(
        fold=fold, experiment=experiment, class_names=tuple(class_names),
        weights=weights,
        train_x=train_x, train_y=train_y,
        val_x=held_x, val_y=held_y,
        test_x=held_x, test_y=held_y)


# ---------------------------------------------------------------------------
# Synthetic stand-in corpus.

SYNTH_BANDS_HZ = (400.0, 800.0, 1600.0, 3200.0)


def _synth_clip(rng, band_hz: float, duration_s: float, sr: int) -> AudioClip:
    f = band_hz * (1.0 + rng.uniform(-0.05, 0.05))
    n = int(duration_s * sr)
    t = np.arange(n) / sr
    x = 0.30 * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    x += 0.06 * np.sin(2 * np.pi * 2 * f * t)
    x += 0.003 * rng.standard_normal(n)
    fade = int(0.01 * sr)
    ramp = np.linspace(0.0, 1.0, fade)
    x[:fade] *= ramp
    x[-fade:] *= ramp[::-1]
    return AudioClip(np.clip(x, -1.0, 1.0), sr)


def synth_corpus(out_dir, classes: int = 4, per_class: int = 100, seed: int = 0,
                 task: str = "character", imbalance: float = 0.0) -> str:
    """Write a synthetic corpus; returns the manifest path.

    classes=4: one tone band per error category, per_class samples each.
    classes=2: a minority category vs 'correct', majority count =
    per_class * imbalance. The minority lives entirely in a band that a
    fifth of the majority shares, so the band is inherently ambiguous:
    an unweighted learner resolves it toward the majority, a weighted one
    toward the minority, which separates their minority recalls.
    """
    if classes not in (2, 4):
        raise ValidationError("classes must be 2 or 4")
    if classes == 2 and imbalance < 1.0:
        raise ValidationError("a binary corpus needs imbalance >= 1")
    rng = np.random.default_rng(seed)
    audio_dir = os.path.join(out_dir, "audio")
    os.makedirs(audio_dir, exist_ok=True)
    sr = PIPELINE_RATE_HZ
    rows = []

    def emit(idx: int, label: str, band: float):
        sid = f"s{idx:05d}"
        duration = rng.uniform(0.6, 0.8)
        clip = _synth_clip(rng, band, duration, sr)
        rel = os.path.join("audio", f"{sid}.wav")
        save_wav(clip, os.path.join(out_dir, rel), 16)
        subj = f"subj{idx % 90:03d}"
        rows.append((sid, subj, str(3 + idx % 6), "F" if idx % 2 else "M",
                     PHRASES[idx % 96].phrase_id,
                     "" if task == "phrase" else "1",
                     rel, label, label, f"{clip.duration_s:.4f}"))

    idx = 0
    if classes == 4:
        for c, label in enumerate(ERROR_CATEGORIES):
            for _ in range(per_class):
                emit(idx, label, SYNTH_BANDS_HZ[c])
                idx += 1
    else:
        _, b, c = SYNTH_BANDS_HZ[:3]
        minority = per_class
        majority = int(round(per_class * imbalance))
        for j in range(minority):
            emit(idx, "backing", b)
            idx += 1
        for j in range(majority):  # 20% in the shared band
            emit(idx, CORRECT_LABEL, b if j % 5 == 0 else c)
            idx += 1

    manifest = os.path.join(out_dir, "manifest.csv")
    with open(manifest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_FIELDS)
        w.writerows(rows)
    return manifest


# ---------------------------------------------------------------------------
# On-disk feature store with content-hash skipping (CLI `extract`).

@dataclass
class FeatureStore:
    root: str
    preset: str
    master_seed: int
    index: dict = field(default_factory=dict)

    def __post_init__(self):
        os.makedirs(self.root, exist_ok=True)
        self._index_path = os.path.join(self.root, "index.json")
        if os.path.exists(self._index_path):
            with open(self._index_path, encoding="utf-8") as fh:
                self.index = json.load(fh)

    def _digest(self, sample: SpeechSample, wav_path: str) -> str:
        h = hashlib.blake2b(digest_size=16)
        with open(wav_path, "rb") as fh:
            h.update(fh.read())
        h.update(f"|{self.preset}|{self.master_seed}".encode())
        return h.hexdigest()

    def ensure(self, samples, n_variants: int = 9, jobs: int = 1,
               audio_root=None) -> tuple:
        """Extract any missing/stale feature stacks; returns (computed, skipped)."""
        from .features import FeatureMap, save_feature_map
        stale = []
        digests = {}
        for s in samples:
            path = s.audio_path
            if audio_root is not None and not os.path.isabs(path):
                path = os.path.join(audio_root, path)
            if not os.path.exists(path):
                raise ValidationError(f"audio file missing for sample {s.sample_id}: {path}")
            d = digests[s.sample_id] = self._digest(s, path)
            entry = self.index.get(s.sample_id)
            if entry and entry.get("digest") == d and \
                    all(os.path.exists(os.path.join(self.root, f)) for f in entry["files"]):
                continue
            stale.append(s)
        stacks = compute_feature_stacks(stale, self.preset, self.master_seed,
                                        n_variants=n_variants, jobs=jobs,
                                        audio_root=audio_root)
        for s in stale:
            files = []
            for v in range(stacks[s.sample_id].shape[0]):
                name = f"{s.sample_id}.{v}.ssdf"
                save_feature_map(FeatureMap(stacks[s.sample_id][v], sample_id=s.sample_id),
                                 os.path.join(self.root, name))
                files.append(name)
            self.index[s.sample_id] = {"digest": digests[s.sample_id], "files": files}
        with open(self._index_path, "w", encoding="utf-8") as fh:
            json.dump(self.index, fh, sort_keys=True)
        return len(stale), len(samples) - len(stale)

    def load_stack(self, sample_id: str) -> np.ndarray:
        from .features import load_feature_map
        entry = self.index.get(sample_id)
        if not entry:
            raise ValidationError(f"no stored features for sample {sample_id}")
        maps = [load_feature_map(os.path.join(self.root, f)).values
                for f in entry["files"]]
        return np.stack(maps)
