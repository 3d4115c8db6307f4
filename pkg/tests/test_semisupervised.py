"""EM loop mechanics: pseudo-labeling, convergence history, comparisons."""

import re

import numpy as np
import pytest

from conftest import blobs
from microlink.classifiers import Metrics, ModelConfig, predict_proba_matrix
from microlink.encoding import LabeledExample
from microlink.ensemble import DEFAULT_META_CONFIG, EnsembleSpec
from microlink.errors import SingleClassLabeledError
from microlink.semisupervised import (
    EmConfig,
    _pseudo_examples,
    compare_em,
    em_comparison_rows,
    em_train,
    fit_any,
    write_em_comparison_csv,
    write_history_csv,
)

GLM = ModelConfig("glm", lambda_=1e-3)


def split_pool(examples, n_labeled_per_class, rng_seed=0):
    """First few of each class keep labels, the rest become the pool."""
    labeled, pool, truth = [], [], []
    seen = {0: 0, 1: 0}
    for ex in examples:
        if seen[ex.label] < n_labeled_per_class:
            seen[ex.label] += 1
            labeled.append(ex)
        else:
            pool.append(LabeledExample(ex.features, -1, 1.0, ex.source_id))
            truth.append(ex.label)
    return labeled, pool, np.array(truth)


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"max_iter": 0},
            {"convergence_tol": -0.1},
            {"convergence_tol": 1.0},
            {"pseudo_label_mode": "softish"},
            {"confidence_floor": 0.4},
            {"confidence_floor": 1.0},
        ],
    )
    def test_out_of_range_rejected(self, kwargs):
        with pytest.raises(ValueError):
            EmConfig(**kwargs)

    def test_defaults_listed(self):
        cfg = EmConfig()
        assert cfg.max_iter == 20
        assert cfg.pseudo_label_mode == "hard"


class TestPseudoExamples:
    def pool(self):
        return [
            LabeledExample(np.array([float(i)]), -1, 2.0, f"u{i}")
            for i in range(4)
        ]

    def test_floor_keeps_only_confident_points(self):
        probs = np.array([0.9, 0.65, 0.35, 0.1])
        pseudo = probs >= 0.5
        cfg = EmConfig(confidence_floor=0.7)
        out = _pseudo_examples(self.pool(), probs, pseudo, cfg)
        assert [ex.source_id for ex in out] == ["u0", "u3"]
        assert [ex.label for ex in out] == [1, 0]
        assert all(ex.weight == 2.0 for ex in out)

    def test_default_floor_keeps_everything(self):
        probs = np.array([0.9, 0.65, 0.35, 0.1])
        out = _pseudo_examples(self.pool(), probs, probs >= 0.5, EmConfig())
        assert [ex.label for ex in out] == [1, 1, 0, 0]

    def test_soft_mode_emits_weighted_pair_per_point(self):
        probs = np.array([0.75, 0.2, 0.5, 0.9])
        cfg = EmConfig(pseudo_label_mode="soft_weights")
        out = _pseudo_examples(self.pool(), probs, probs >= 0.5, cfg)
        assert len(out) == 8
        first_pos, first_neg = out[0], out[1]
        assert (first_pos.label, first_pos.weight) == (1, 2.0 * 0.75)
        assert (first_neg.label, first_neg.weight) == (0, 2.0 * 0.25)
        assert first_pos.source_id == first_neg.source_id == "u0"


class TestEmTrain:
    def test_empty_pool_degenerates_to_supervised(self):
        labeled = blobs(n=40, seed=0)
        model, history = em_train(labeled, [], GLM, seed=5)
        assert history == []
        plain = fit_any(GLM, labeled, seed=5)
        X = np.vstack([ex.features for ex in blobs(n=20, seed=1)])
        assert np.array_equal(
            predict_proba_matrix(model, X), predict_proba_matrix(plain, X)
        )

    def test_first_round_always_counts_as_full_change(self):
        labeled, pool, _ = split_pool(blobs(n=60, seed=2), 5)
        _, history = em_train(labeled, pool, GLM, EmConfig(max_iter=1))
        assert len(history) == 1
        assert history[0].iteration == 1
        assert history[0].changed_fraction == 1.0

    def test_separable_pool_converges_in_two_rounds(self):
        labeled, pool, truth = split_pool(blobs(n=120, seed=3, gap=6.0), 5)
        model, history = em_train(labeled, pool, GLM)
        assert [h.iteration for h in history] == [1, 2]
        assert history[1].changed_fraction == 0.0
        X = np.stack([ex.features for ex in pool])
        agrees = (predict_proba_matrix(model, X) >= 0.5) == truth
        assert agrees.all()

    def test_history_obeys_stopping_rule(self):
        labeled, pool, _ = split_pool(blobs(n=90, seed=4, gap=1.5), 4)
        cfg = EmConfig(max_iter=6, convergence_tol=0.01)
        _, history = em_train(labeled, pool, GLM, cfg)
        assert 1 <= len(history) <= 6
        assert [h.iteration for h in history] == list(range(1, len(history) + 1))
        if len(history) < 6:
            assert history[-1].changed_fraction < 0.01
        for h in history[:-1]:
            assert h.changed_fraction >= 0.01

    def test_validation_metrics_recorded_when_requested(self):
        labeled, pool, _ = split_pool(blobs(n=60, seed=5), 5)
        valid = blobs(n=30, seed=6)
        _, history = em_train(labeled, pool, GLM, valid=valid)
        assert all(isinstance(h.metrics, Metrics) for h in history)
        _, bare = em_train(labeled, pool, GLM)
        assert all(h.metrics is None for h in bare)

    def test_soft_weights_mode_trains(self):
        labeled, pool, truth = split_pool(blobs(n=100, seed=7, gap=6.0), 5)
        cfg = EmConfig(pseudo_label_mode="soft_weights")
        model, history = em_train(labeled, pool, GLM, cfg)
        assert history
        X = np.stack([ex.features for ex in pool])
        assert np.mean((predict_proba_matrix(model, X) >= 0.5) == truth) > 0.95

    def test_works_with_an_ensemble_spec(self):
        labeled, pool, _ = split_pool(blobs(n=80, seed=8, gap=6.0), 6)
        spec = EnsembleSpec(
            "stacking",
            (ModelConfig("decision_tree", max_depth=3), GLM),
            meta_config=DEFAULT_META_CONFIG, n_folds=3,
        )
        model, history = em_train(labeled, pool, spec, seed=1)
        assert model.method == "stacking"
        assert history[-1].changed_fraction < 0.001 or len(history) == 20

    def test_single_class_labeled_rejected(self):
        ones = [
            LabeledExample(np.array([float(i), 0.0]), 1, 1.0, f"r{i}")
            for i in range(8)
        ]
        with pytest.raises(SingleClassLabeledError):
            em_train(ones, [], GLM)

    def test_unlabeled_row_in_labeled_set_rejected(self):
        labeled = blobs(n=20, seed=9)
        labeled[0] = LabeledExample(
            labeled[0].features, -1, 1.0, labeled[0].source_id
        )
        with pytest.raises(SingleClassLabeledError):
            em_train(labeled, [], GLM)

    def test_deterministic_for_seed(self):
        labeled, pool, _ = split_pool(blobs(n=70, seed=10, gap=2.0), 5)
        X = np.stack([ex.features for ex in pool])
        m1, h1 = em_train(labeled, pool, GLM, seed=3)
        m2, h2 = em_train(labeled, pool, GLM, seed=3)
        assert h1 == h2
        assert np.array_equal(
            predict_proba_matrix(m1, X), predict_proba_matrix(m2, X)
        )


class TestHistoryCsv:
    def test_layout_with_and_without_metrics(self, tmp_path):
        labeled, pool, _ = split_pool(blobs(n=60, seed=11), 5)
        _, history = em_train(labeled, pool, GLM, valid=blobs(n=30, seed=12))
        path = tmp_path / "hist.csv"
        write_history_csv(history, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == (
            "iteration,changed_fraction,valid_accuracy,valid_precision,"
            "valid_recall,valid_f1"
        )
        assert len(lines) == len(history) + 1
        assert lines[1].startswith("1,1.0,")

        _, bare = em_train(labeled, pool, GLM)
        write_history_csv(bare, path)
        row = path.read_text().strip().splitlines()[1]
        assert row.endswith(",,,")


class TestComparison:
    def test_delta_format(self):
        sup = Metrics.from_counts(tp=90, fp=10, fn=10, tn=90)
        aug = Metrics.from_counts(tp=95, fp=10, fn=5, tn=90)
        rows = em_comparison_rows(sup, aug)
        assert rows[0]["method"] == "supervised ensemble"
        assert rows[1]["method"] == "supervised ensemble + EM"
        assert rows[0]["recall"] == "0.900"
        assert rows[1]["recall"] == "0.950 (0.050)"
        pattern = re.compile(r"^\d\.\d{3} \(-?\d\.\d{3}\)$")
        for key in ("accuracy", "precision", "recall", "f1"):
            assert pattern.match(rows[1][key])

    def test_compare_em_returns_metrics_and_rows(self):
        labeled, pool, _ = split_pool(blobs(n=80, seed=13, gap=2.0), 4)
        test = blobs(n=60, seed=14, gap=2.0)
        sup, em, rows = compare_em(labeled, pool, GLM, EmConfig(), test)
        assert isinstance(sup, Metrics) and isinstance(em, Metrics)
        assert f"{sup.f1:.3f}" == rows[0]["f1"]
        assert rows[1]["f1"].startswith(f"{em.f1:.3f} (")

    def test_comparison_csv_layout(self, tmp_path):
        rows = em_comparison_rows(
            Metrics.from_counts(9, 1, 1, 9), Metrics.from_counts(10, 1, 0, 9)
        )
        path = tmp_path / "cmp.csv"
        write_em_comparison_csv(rows, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "method,accuracy,precision,recall,F1-measure"
        assert lines[1].startswith("supervised ensemble,")
        assert lines[2].startswith("supervised ensemble + EM,")
