"""Ensemble combiners over the base learners.

Bagging fits each base config on a bootstrap sample and combines by
averaging or voting; boosting delegates to the staged gradient-boosted
learner; stacking feeds out-of-fold base predictions to a meta learner.
Grid search and method selection choose configurations by validation F1.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .classifiers import (
    Metrics,
    ModelConfig,
    _ALLOWED_PARAMS,
    fit,
    predict_proba_matrix,
)
from .encoding import LabeledExample, design_matrix
from .errors import EmptyGridError, InvalidSpecError, SingleClassError

METHODS = ("bagging", "boosting", "stacking")
COMBINERS = ("majority_vote", "weighted_vote", "average")


@dataclass(frozen=True)
class EnsembleSpec:
    """Method plus base roster; stacking adds a meta learner and folds."""

    method: str
    base_configs: tuple
    combiner: str = "average"
    meta_config: ModelConfig = None
    n_folds: int = 5

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidSpecError(f"unknown ensemble method {self.method!r}")
        if not self.base_configs:
            raise InvalidSpecError("at least one base config is required")
        if self.method == "bagging" and self.combiner not in COMBINERS:
            raise InvalidSpecError(f"unknown combiner {self.combiner!r}")
        if self.method == "boosting":
            if len(self.base_configs) != 1 or self.base_configs[0].kind != "gbt":
                raise InvalidSpecError(
                    "boosting takes exactly one gbt base config"
                )
        if self.method == "stacking":
            if self.meta_config is None:
                raise InvalidSpecError("stacking requires a meta config")
            if self.n_folds < 2:
                raise InvalidSpecError("stacking requires n_folds >= 2")

    def to_dict(self):
        out = {
            "method": self.method,
            "base_configs": [c.to_dict() for c in self.base_configs],
        }
        if self.method == "bagging":
            out["combiner"] = self.combiner
        if self.method == "stacking":
            out["meta_config"] = self.meta_config.to_dict()
            out["n_folds"] = self.n_folds
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(
            method=d["method"],
            base_configs=tuple(ModelConfig.from_dict(c) for c in d["base_configs"]),
            combiner=d.get("combiner", "average"),
            meta_config=(
                ModelConfig.from_dict(d["meta_config"]) if "meta_config" in d else None
            ),
            n_folds=d.get("n_folds", 5),
        )


@dataclass
class EnsembleModel:
    """Fitted ensemble; stacking keeps its out-of-fold bookkeeping for audit."""

    method: str
    base_models: list
    seed: int
    combiner: str = "average"
    weights: np.ndarray = None
    meta_model: object = None
    oof_predictions: np.ndarray = field(default=None, repr=False)
    fold_assignment: np.ndarray = field(default=None, repr=False)


# Table-style default roster: two forests, three boosted-tree configs, one
# linear model, with a half-mixed elastic net on top.
DEFAULT_STACKING_BASES = (
    ModelConfig("random_forest", ntrees=110, max_depth=14, nbins=512,
                sample_rate=0.76, col_sample_rate_per_tree=0.83),
    ModelConfig("random_forest", ntrees=100, max_depth=18, nbins=16,
                sample_rate=0.86, col_sample_rate_per_tree=0.38),
    ModelConfig("gbt", ntrees=100, max_depth=20, nbins=256,
                sample_rate=0.76, col_sample_rate_per_tree=0.81),
    ModelConfig("gbt", ntrees=110, max_depth=20, nbins=512,
                sample_rate=0.64, col_sample_rate_per_tree=0.65),
    ModelConfig("gbt", ntrees=110, max_depth=21, nbins=512,
                sample_rate=0.46, col_sample_rate_per_tree=0.88),
    ModelConfig("glm", alpha=0.0),
)
DEFAULT_META_CONFIG = ModelConfig("glm", alpha=0.5)

# Small roster for interactive runs and grid searches.
COMPACT_BASES = (
    ModelConfig("random_forest", ntrees=30, max_depth=8),
    ModelConfig("gbt", ntrees=40, max_depth=3),
    ModelConfig("glm", alpha=0.0),
)

DEFAULT_GRIDS = {
    "bagging": {"combiner": ["average", "majority_vote", "weighted_vote"]},
    "boosting": {"ntrees": [30, 60], "learning_rate": [0.1, 0.3]},
    "stacking": {"n_folds": [3, 5]},
}


def default_spec(method, compact=True):
    """A ready-to-train spec for the given method."""
    bases = COMPACT_BASES if compact else DEFAULT_STACKING_BASES
    if method == "bagging":
        return EnsembleSpec("bagging", bases, combiner="average")
    if method == "boosting":
        gbt = next(c for c in bases if c.kind == "gbt")
        return EnsembleSpec("boosting", (gbt,))
    return EnsembleSpec(
        "stacking", bases, meta_config=DEFAULT_META_CONFIG,
        n_folds=3 if compact else 5,
    )


def _seed_block(seed, count):
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count)]


def _stratified_folds(y, n_folds, rng):
    folds = np.empty(len(y), dtype=int)
    for c in (0, 1):
        idx = np.flatnonzero(y == c)
        rng.shuffle(idx)
        folds[idx] = np.arange(len(idx)) % n_folds
    return folds


def _subset(examples, idx):
    return [examples[i] for i in idx]


def _fit_bagging(spec, train, seed):
    n = len(train)
    X, y, _ = design_matrix(train)
    seeds = _seed_block(seed, 2 * len(spec.base_configs))
    models, weights = [], []
    for i, config in enumerate(spec.base_configs):
        rng = np.random.default_rng(seeds[2 * i])
        rows = rng.integers(0, n, size=n)
        model = fit(config, _subset(train, rows), seeds[2 * i + 1])
        oob = np.setdiff1d(np.arange(n), rows)
        # weighted votes use each member's out-of-bag accuracy as its
        # validation accuracy; fall back to training rows if the bag
        # swallowed everything
        score_rows = oob if oob.size else np.arange(n)
        pred = predict_proba_matrix(model, X[score_rows]) >= 0.5
        weights.append(float(np.mean(pred == (y[score_rows] == 1))))
        models.append(model)
    return EnsembleModel(
        "bagging", models, seed, combiner=spec.combiner,
        weights=np.array(weights),
    )


def _fit_boosting(spec, train, seed):
    seeds = _seed_block(seed, 1)
    model = fit(spec.base_configs[0], train, seeds[0])
    return EnsembleModel("boosting", [model], seed)


def _fit_stacking(spec, train, seed):
    X, y, _ = design_matrix(train)
    m, k = len(spec.base_configs), spec.n_folds
    counts = [int(np.sum(y == c)) for c in (0, 1)]
    if min(counts) < k:
        raise InvalidSpecError(
            f"stacking with {k} folds needs at least {k} examples per class"
        )
    seeds = _seed_block(seed, 1 + m * k + m + 1)
    rng = np.random.default_rng(seeds[0])
    folds = _stratified_folds(y, k, rng)
    oof = np.zeros((len(train), m))
    for i, config in enumerate(spec.base_configs):
        for f in range(k):
            tr = np.flatnonzero(folds != f)
            te = np.flatnonzero(folds == f)
            model = fit(config, _subset(train, tr), seeds[1 + i * k + f])
            oof[te, i] = predict_proba_matrix(model, X[te])
    meta_train = [
        LabeledExample(oof[j], ex.label, ex.weight, ex.source_id)
        for j, ex in enumerate(train)
    ]
    meta_model = fit(spec.meta_config, meta_train, seeds[1 + m * k + m])
    base_models = [
        fit(config, train, seeds[1 + m * k + i])
        for i, config in enumerate(spec.base_configs)
    ]
    return EnsembleModel(
        "stacking", base_models, seed, meta_model=meta_model,
        oof_predictions=oof, fold_assignment=folds,
    )


def train_ensemble(spec, train, seed=0):
    """Fit an ensemble of the spec's method on labeled examples."""
    _, y, _ = design_matrix(train)
    if len(np.unique(y[y >= 0])) < 2:
        raise SingleClassError("ensemble training needs both classes")
    if spec.method == "bagging":
        return _fit_bagging(spec, train, seed)
    if spec.method == "boosting":
        return _fit_boosting(spec, train, seed)
    return _fit_stacking(spec, train, seed)


def ensemble_predict_proba(model, X):
    """Positive-class probabilities from a fitted ensemble."""
    X = np.asarray(X, dtype=float)
    base = np.stack([predict_proba_matrix(b, X) for b in model.base_models])
    if model.method == "boosting":
        return base[0]
    if model.method == "stacking":
        return predict_proba_matrix(model.meta_model, base.T)
    if model.combiner == "average":
        return base.mean(axis=0)
    votes = (base >= 0.5).astype(float)
    if model.combiner == "majority_vote":
        return votes.mean(axis=0)
    w = model.weights / model.weights.sum() if model.weights.sum() > 0 else None
    if w is None:
        return votes.mean(axis=0)
    return np.tensordot(w, votes, axes=1)


def predict_proba_any(model, X):
    """Probability matrix for either a single classifier or an ensemble."""
    if isinstance(model, EnsembleModel):
        return ensemble_predict_proba(model, X)
    return predict_proba_matrix(model, X)


def evaluate_model(model, test, threshold=0.5):
    """Metrics for a classifier or ensemble on labeled examples."""
    X, y, _ = design_matrix(test)
    pred = predict_proba_any(model, X) >= threshold
    actual = y == 1
    tp = int(np.sum(pred & actual))
    fp = int(np.sum(pred & ~actual))
    fn = int(np.sum(~pred & actual))
    tn = int(np.sum(~pred & ~actual))
    return Metrics.from_counts(tp, fp, fn, tn)


def _apply_grid_point(method, template, point):
    base_configs = tuple(point.get("base_configs", template.base_configs))
    combiner = point.get("combiner", template.combiner)
    meta_config = point.get("meta_config", template.meta_config)
    n_folds = point.get("n_folds", template.n_folds)
    model_params = {
        k: v for k, v in point.items()
        if k not in ("base_configs", "combiner", "meta_config", "n_folds")
    }
    if model_params:
        rebuilt = []
        for config in base_configs:
            updates = {
                k: v for k, v in model_params.items()
                if k in _ALLOWED_PARAMS[config.kind]
            }
            rebuilt.append(
                ModelConfig.from_dict({**config.to_dict(), **updates})
                if updates else config
            )
        base_configs = tuple(rebuilt)
    return EnsembleSpec(
        method, base_configs, combiner=combiner,
        meta_config=meta_config, n_folds=n_folds,
    )


def grid_search(method, grid, train, valid, seed=0, template=None):
    """Exhaustive search over the grid; winner has the best validation F1.

    Ties keep the earliest point in grid enumeration order.  Returns the
    winning spec and the full score table.
    """
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise EmptyGridError("grid must map each parameter to a non-empty list")
    template = template or default_spec(method)
    keys = list(grid)
    table = []
    best = None
    for index, combo in enumerate(itertools.product(*(grid[k] for k in keys))):
        point = dict(zip(keys, combo))
        spec = _apply_grid_point(method, template, point)
        model = train_ensemble(spec, train, seed)
        metrics = evaluate_model(model, valid)
        table.append({
            "index": index,
            "method": method,
            "params": {k: _param_repr(v) for k, v in point.items()},
            "accuracy": metrics.accuracy,
            "precision": metrics.precision,
            "recall": metrics.recall,
            "f1": metrics.f1,
        })
        if best is None or metrics.f1 > best[0]:
            best = (metrics.f1, spec)
    return best[1], table


def _param_repr(value):
    if isinstance(value, ModelConfig):
        return value.to_dict()
    if isinstance(value, (tuple, list)):
        return [_param_repr(v) for v in value]
    return value


def select_best_method(train, valid, grids=None, seed=0, templates=None):
    """Grid-search all three methods and keep the best champion by F1.

    Returns the winning spec plus a three-row comparison table in
    (model, accuracy, precision, recall, F1-measure) layout.  Exact ties
    fall to the earliest method in (bagging, boosting, stacking) order.
    """
    grids = grids or DEFAULT_GRIDS
    templates = templates or {}
    comparison = []
    best = None
    for method in METHODS:
        spec, _ = grid_search(
            method, grids[method], train, valid, seed,
            template=templates.get(method),
        )
        model = train_ensemble(spec, train, seed)
        metrics = evaluate_model(model, valid)
        comparison.append({
            "model": method,
            "accuracy": metrics.accuracy,
            "precision": metrics.precision,
            "recall": metrics.recall,
            "f1": metrics.f1,
        })
        if best is None or metrics.f1 > best[0]:
            best = (metrics.f1, spec)
    return best[1], comparison


def write_comparison_csv(rows, path):
    """Method comparison in (model, accuracy, precision, recall, F1) layout."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "accuracy", "precision", "recall", "F1-measure"])
        for row in rows:
            writer.writerow([
                row["model"], repr(row["accuracy"]), repr(row["precision"]),
                repr(row["recall"]), repr(row["f1"]),
            ])


def save_spec(spec, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec.to_dict(), fh, sort_keys=True, indent=2)


def load_spec(path):
    with open(path, encoding="utf-8") as fh:
        return EnsembleSpec.from_dict(json.load(fh))
