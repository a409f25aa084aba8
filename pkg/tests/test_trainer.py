from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from ssdkit.dataset import (
    MaterializedFold,
    build_folds,
    compute_class_weights,
    consistency_filter,
    parse_manifest,
    synth_corpus,
)
from ssdkit.errors import (
    ConfigurationError,
    DegenerateInputError,
    ParameterError,
)
from ssdkit.nnet import (
    BlockConfig,
    Checkpoint,
    SmallCnnConfig,
    checkpoint_to_bytes,
    init_weights,
)
from ssdkit.trainer import (
    EvalReport,
    TrainConfig,
    benchmark_latency,
    cross_validate,
    evaluate,
    evaluate_predictions,
    export_confusion_csv,
    loss_for_experiment,
    summarize_accuracies,
    train_fold,
)

BLOB_SHAPE = (12, 12, 3)
BLOB_MODEL = SmallCnnConfig(BLOB_SHAPE, (BlockConfig(6), BlockConfig(12)), 4)


def blob_fold(n_train_per=16, n_test_per=6, k=4, seed=0, noise=0.25,
              scale=2.0, experiment="e3"):
    """Synthetic-array fold: one Gaussian blob per class, no audio involved."""
    rng = np.random.default_rng(seed)
    means = scale * rng.normal(0, 1.0, (k,) + BLOB_SHAPE)

    def draw(n_per):
        x = np.concatenate([means[c] + noise * rng.normal(0, 1, (n_per,) + BLOB_SHAPE)
                            for c in range(k)]).astype(np.float32)
        y = np.repeat(np.arange(k), n_per).astype(np.int64)
        return x, y

    train_x, train_y = draw(n_train_per)
    test_x, test_y = draw(n_test_per)
    names = tuple(f"c{j}" for j in range(k))
    weights = compute_class_weights({n: n_train_per for n in names})
    return MaterializedFold(fold=0, experiment=experiment, class_names=names,
                            weights=weights, train_x=train_x, train_y=train_y,
                            val_x=test_x, val_y=test_y, test_x=test_x,
                            test_y=test_y)


class TestTrainConfig:
    def test_loss_follows_experiment(self):
        assert loss_for_experiment("e1") == "categorical_ce"
        assert loss_for_experiment("e3") == "categorical_ce"
        assert loss_for_experiment("e2:backing") == "binary_ce"
        assert TrainConfig("e3").loss == "categorical_ce"
        assert TrainConfig("e2:fcdp").loss == "binary_ce"

    def test_mismatched_loss_rejected(self):
        with pytest.raises(ConfigurationError):
            TrainConfig("e3", loss="binary_ce")
        with pytest.raises(ConfigurationError):
            TrainConfig("e2:backing", loss="categorical_ce")
        with pytest.raises(ConfigurationError):
            TrainConfig("e3", loss="hinge")

    def test_bounds(self):
        with pytest.raises(ConfigurationError):
            TrainConfig("e3", batch_size=0)
        with pytest.raises(ConfigurationError):
            TrainConfig("e3", epochs=0)
        with pytest.raises(ConfigurationError):
            TrainConfig("e3", lr=-1e-4)
        with pytest.raises(ConfigurationError):
            TrainConfig("e3", lr=float("nan"))
        assert TrainConfig("e3", lr=0.0).lr == 0.0


class TestTrainFold:
    def test_zero_lr_returns_initialization(self):
        data = blob_fold()
        cfg = TrainConfig("e3", seed=7, epochs=2, lr=0.0, batch_size=32)
        ckpt = train_fold(data, cfg, BLOB_MODEL)
        init = init_weights(BLOB_MODEL, 7)
        for name, p in init.items():
            assert np.array_equal(ckpt.weights[name], p)
        assert ckpt.training_meta["epoch"] == 1
        assert len(ckpt.training_meta["val_loss_curve"]) == 2

    def test_deterministic_given_seed(self):
        data = blob_fold()
        cfg = TrainConfig("e3", seed=3, epochs=2, lr=1e-3, batch_size=32)
        a = train_fold(data, cfg, BLOB_MODEL)
        b = train_fold(data, cfg, BLOB_MODEL)
        assert checkpoint_to_bytes(a) == checkpoint_to_bytes(b)
        c = train_fold(data, TrainConfig("e3", seed=4, epochs=2, lr=1e-3,
                                         batch_size=32), BLOB_MODEL)
        assert checkpoint_to_bytes(c) != checkpoint_to_bytes(a)

    def test_learns_separable_blobs(self):
        data = blob_fold(noise=0.2)
        cfg = TrainConfig("e3", seed=0, epochs=20, lr=3e-3, batch_size=16)
        ckpt = train_fold(data, cfg, BLOB_MODEL)
        res = evaluate(ckpt, data.test_x, data.test_y)
        assert res.accuracy >= 0.9
        assert ckpt.class_names == list(data.class_names)
        assert 1 <= ckpt.training_meta["epoch"] <= cfg.epochs

    def test_experiment_mismatch(self):
        data = blob_fold(experiment="e3")
        with pytest.raises(ConfigurationError):
            train_fold(data, TrainConfig("e1", epochs=1), BLOB_MODEL)

    def test_class_count_mismatch(self):
        data = blob_fold()
        bad = SmallCnnConfig(BLOB_SHAPE, (BlockConfig(6),), 2)
        with pytest.raises(ConfigurationError):
            train_fold(data, TrainConfig("e3", epochs=1), bad)

    def test_input_shape_mismatch(self):
        data = blob_fold()
        bad = SmallCnnConfig((16, 16, 3), (BlockConfig(6),), 4)
        with pytest.raises(ConfigurationError):
            train_fold(data, TrainConfig("e3", epochs=1), bad)

    def test_weight_override_shape_checked(self):
        data = blob_fold()
        with pytest.raises(ParameterError):
            train_fold(data, TrainConfig("e3", epochs=1), BLOB_MODEL,
                       class_weights=np.ones(3))

    def test_weight_override_changes_training(self):
        data = blob_fold(n_train_per=8, n_test_per=2)
        cfg = TrainConfig("e3", seed=1, epochs=1, lr=1e-3, batch_size=16)
        flat = train_fold(data, cfg, BLOB_MODEL, class_weights=np.ones(4))
        skew = train_fold(data, cfg, BLOB_MODEL,
                          class_weights=np.array([4.0, 1.0, 1.0, 1.0]))
        assert checkpoint_to_bytes(flat) != checkpoint_to_bytes(skew)


class TestEvaluatePredictions:
    def test_hand_oracle(self):
        res = evaluate_predictions([0, 1, 1, 0], [0, 1, 0, 1], 2)
        assert res.confusion.tolist() == [[1, 1], [1, 1]]
        assert res.accuracy == 0.5

    def test_rows_are_predicted_columns_target(self):
        res = evaluate_predictions([0], [1], 2)
        assert res.confusion[0, 1] == 1
        assert res.confusion[1, 0] == 0

    def test_matches_direct_mean(self):
        rng = np.random.default_rng(9)
        for _ in range(15):
            n = int(rng.integers(1, 200))
            k = int(rng.integers(2, 5))
            pred = rng.integers(0, k, n)
            targ = rng.integers(0, k, n)
            res = evaluate_predictions(pred, targ, k)
            assert res.accuracy == pytest.approx(np.mean(pred == targ))
            assert res.confusion.sum() == n
            col_sums = res.confusion.sum(axis=0)
            assert col_sums.tolist() == [int(np.sum(targ == j)) for j in range(k)]

    def test_degenerate_and_invalid(self):
        with pytest.raises(DegenerateInputError):
            evaluate_predictions([], [], 2)
        with pytest.raises(ParameterError):
            evaluate_predictions([0, 1], [0], 2)
        with pytest.raises(ParameterError):
            evaluate_predictions([0, 2], [0, 1], 2)


class TestSummaries:
    def test_box_plot_fields(self):
        s = summarize_accuracies([0.690, 0.721, 0.724, 0.648, 0.711])
        assert s["mean"] == pytest.approx(0.6988)
        assert round(100 * s["mean"], 1) == 69.9
        assert s["min"] == pytest.approx(0.648)
        assert s["max"] == pytest.approx(0.724)
        assert s["q50"] == pytest.approx(0.711)

    def test_empty_rejected(self):
        with pytest.raises(DegenerateInputError):
            summarize_accuracies([])

    def test_report_json_round_trip(self):
        report = EvalReport(experiment="e3", k=5, seed=0, model_digest="abc",
                            per_fold=[{"fold": 0, "accuracy": 1.0,
                                       "confusion": [[2, 0], [0, 2]],
                                       "val_loss_curve": [0.5], "best_epoch": 1}],
                            summary={"mean": 1.0})
        text = report.to_json()
        assert EvalReport.from_json(text).to_json() == text
        json.loads(text)

    def test_confusion_csv(self, tmp_path):
        report = EvalReport(
            experiment="e2:backing", k=2, seed=0, model_digest="d",
            per_fold=[{"fold": f, "accuracy": 1.0,
                       "confusion": [[3 + f, 1], [0, 5]],
                       "val_loss_curve": [], "best_epoch": 1}
                      for f in range(2)])
        path = tmp_path / "conf.csv"
        export_confusion_csv(report, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["fold", "predicted", "target_0", "target_1"]
        assert rows[1] == ["0", "0", "3", "1"]
        assert rows[4] == ["1", "1", "0", "5"]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cv_corpus")
    manifest = synth_corpus(root, classes=4, per_class=4, seed=11)
    samples = consistency_filter(parse_manifest(manifest))
    return str(root), samples


class TestCrossValidate:
    def test_full_plan_report(self, corpus):
        root, samples = corpus
        plan = build_folds(samples, k=3, seed=0)
        cfg = TrainConfig("e3", seed=1, epochs=2, lr=1e-3, batch_size=64)
        model = SmallCnnConfig((128, 128, 3),
                               (BlockConfig(4, stride=2), BlockConfig(8, stride=2)),
                               4)
        seen = []
        report = cross_validate(samples, plan, cfg, model_cfg=model,
                                audio_root=root,
                                checkpoint_hook=lambda f, c: seen.append((f, c)))
        assert report.k == 3
        assert [e["fold"] for e in report.per_fold] == [0, 1, 2]
        assert [f for f, _ in seen] == [0, 1, 2]
        assert all(isinstance(c, Checkpoint) for _, c in seen)
        accs = [e["accuracy"] for e in report.per_fold]
        assert report.summary["mean"] == pytest.approx(np.mean(accs))
        assert report.model_digest == model.digest()
        for entry in report.per_fold:
            conf = np.asarray(entry["confusion"])
            assert conf.sum() == len(plan.test_ids(entry["fold"]))


class TestBenchmark:
    def make_ckpt(self):
        cfg = SmallCnnConfig((8, 8, 3), (BlockConfig(4),), 4)
        return Checkpoint(config=cfg, weights=init_weights(cfg, 0),
                          training_meta={"experiment": "e3", "fold": 2,
                                         "config_digest": cfg.digest()},
                          class_names=("a", "b", "c", "d"))

    def test_floors_applied(self):
        report = benchmark_latency(self.make_ckpt(), warmup=0, iters=1)
        assert report.warmup == 10
        assert report.iters == 50
        assert len(report.times_ms) == 50
        assert report.mean_ms > 0
        assert report.checkpoint_bytes == len(checkpoint_to_bytes(self.make_ckpt()))
        assert report.model.startswith("e3-fold2-")

    def test_invalid_counts(self):
        with pytest.raises(ParameterError):
            benchmark_latency(self.make_ckpt(), iters=0)
        with pytest.raises(ParameterError):
            benchmark_latency(self.make_ckpt(), warmup=-1)

    def test_report_dict_round_trips_json(self):
        report = benchmark_latency(self.make_ckpt())
        doc = json.loads(json.dumps(report.to_dict()))
        assert doc["iters"] == 50
        assert doc["batch"] == 1
