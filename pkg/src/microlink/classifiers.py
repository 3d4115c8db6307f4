"""Binary classifiers built from scratch on numpy.

Five model kinds share one interface: naive Bayes over quantile-binned
features, a Gini histogram decision tree, a random forest, gradient-boosted
trees with logistic loss, and an elastic-net logistic model fitted by
FISTA.  All are deterministic given a seed and predict the probability of
the positive class.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .encoding import design_matrix
from .errors import (
    DegenerateDataError,
    DimensionMismatchError,
    EmptyTrainingError,
    InvalidParamsError,
    SingleClassError,
    UnknownLabelValueError,
    WrongModelKindError,
)
from .trees import (
    Tree,
    apply_bin_edges,
    fit_bin_edges,
    fit_gini_tree,
    fit_second_order_tree,
    predict_tree,
)

MODEL_KINDS = ("naive_bayes", "decision_tree", "random_forest", "gbt", "glm")

GLM_LAMBDA_GRID = (1e-4, 1e-3, 1e-2, 1e-1)

_PROBA_FLOOR = 1e-12

_ALLOWED_PARAMS = {
    "naive_bayes": {"nbins"},
    "decision_tree": {"max_depth", "nbins"},
    "random_forest": {
        "ntrees", "max_depth", "nbins", "sample_rate", "col_sample_rate_per_tree",
    },
    "gbt": {
        "ntrees", "max_depth", "nbins", "sample_rate",
        "col_sample_rate_per_tree", "learning_rate",
    },
    "glm": {"alpha", "lambda_"},
}

_DEFAULT_PARAMS = {
    "naive_bayes": {"nbins": 16},
    "decision_tree": {"max_depth": 8, "nbins": 32},
    "random_forest": {
        "ntrees": 50, "max_depth": 10, "nbins": 32,
        "sample_rate": 1.0, "col_sample_rate_per_tree": 0.7,
    },
    "gbt": {
        "ntrees": 50, "max_depth": 3, "nbins": 32, "sample_rate": 1.0,
        "col_sample_rate_per_tree": 1.0, "learning_rate": 0.1,
    },
    "glm": {"alpha": 0.5, "lambda_": None},
}


@dataclass(frozen=True)
class ModelConfig:
    """A model kind plus only the hyperparameters that kind understands."""

    kind: str
    alpha: float = None
    lambda_: float = None
    ntrees: int = None
    max_depth: int = None
    nbins: int = None
    sample_rate: float = None
    col_sample_rate_per_tree: float = None
    learning_rate: float = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise InvalidParamsError(f"unknown model kind {self.kind!r}")
        allowed = _ALLOWED_PARAMS[self.kind]
        for name in ("alpha", "lambda_", "ntrees", "max_depth", "nbins",
                     "sample_rate", "col_sample_rate_per_tree", "learning_rate"):
            value = getattr(self, name)
            if value is None:
                continue
            if name not in allowed:
                raise InvalidParamsError(
                    f"parameter {name!r} is not meaningful for kind {self.kind!r}"
                )
            self._check_range(name, value)

    @staticmethod
    def _check_range(name, value):
        if name == "alpha" and not 0.0 <= value <= 1.0:
            raise InvalidParamsError("alpha must lie in [0, 1]")
        if name == "lambda_" and value < 0:
            raise InvalidParamsError("lambda must be non-negative")
        if name == "ntrees" and value < 1:
            raise InvalidParamsError("ntrees must be at least 1")
        if name == "max_depth" and value < 1:
            raise InvalidParamsError("max_depth must be at least 1")
        if name == "nbins" and value < 2:
            raise InvalidParamsError("nbins must be at least 2")
        if name in ("sample_rate", "col_sample_rate_per_tree") and not 0.0 < value <= 1.0:
            raise InvalidParamsError(f"{name} must lie in (0, 1]")
        if name == "learning_rate" and value <= 0:
            raise InvalidParamsError("learning_rate must be positive")

    def resolved(self):
        """Effective hyperparameters: explicit values over kind defaults."""
        out = dict(_DEFAULT_PARAMS[self.kind])
        for name in out:
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out

    def to_dict(self):
        out = {"kind": self.kind}
        for name in _ALLOWED_PARAMS[self.kind]:
            value = getattr(self, name)
            if value is not None:
                out["lambda" if name == "lambda_" else name] = value
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "lambda" in d:
            d["lambda_"] = d.pop("lambda")
        return cls(**d)


@dataclass
class ClassifierModel:
    """A fitted model: kind tag, expected feature count, opaque state."""

    kind: str
    n_features: int
    seed: int
    state: dict = field(repr=False, default_factory=dict)


@dataclass(frozen=True)
class Metrics:
    """Threshold metrics with the confusion counts they derive from."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int

    @classmethod
    def from_counts(cls, tp, fp, fn, tn):
        total = tp + fp + fn + tn
        accuracy = (tp + tn) / total if total else 0.0
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = (
            2.0 * precision * recall / (precision + recall)
            if precision + recall else 0.0
        )
        return cls(accuracy, precision, recall, f1, tp, fp, fn, tn)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -35.0, 35.0)))


def _check_training(X, y):
    if X.shape[0] == 0:
        raise EmptyTrainingError("no training examples")
    if np.any(y < 0):
        raise UnknownLabelValueError("training labels must be 0 or 1")
    if len(np.unique(y)) < 2:
        raise SingleClassError("training data must contain both classes")
    if X.shape[1] == 0 or bool(np.all(X.max(axis=0) == X.min(axis=0))):
        raise DegenerateDataError("every feature is constant")


def _fit_naive_bayes(X, y, w, params, seed):
    edges = fit_bin_edges(X, params["nbins"])
    Xb = apply_bin_edges(X, edges)
    W = float(w.sum())
    log_prior = []
    log_like = []
    for c in (0, 1):
        mask = y == c
        total_c = float(w[mask].sum())
        log_prior.append(math.log(total_c / W))
        tables = []
        for j, e in enumerate(edges):
            nb = len(e) + 1
            counts = np.bincount(Xb[mask, j], weights=w[mask], minlength=nb)
            tables.append(np.log((counts + 1.0) / (total_c + nb)))
        log_like.append(tables)
    return {"edges": edges, "log_prior": np.array(log_prior), "log_like": log_like}


def _predict_naive_bayes(state, X):
    Xb = apply_bin_edges(X, state["edges"])
    lp = np.tile(state["log_prior"], (X.shape[0], 1))
    for c in (0, 1):
        for j, table in enumerate(state["log_like"][c]):
            lp[:, c] += table[Xb[:, j]]
    p = _sigmoid(lp[:, 1] - lp[:, 0])
    return np.clip(p, _PROBA_FLOOR, 1.0 - _PROBA_FLOOR)


def _fit_decision_tree(X, y, w, params, seed):
    edges = fit_bin_edges(X, params["nbins"])
    Xb = apply_bin_edges(X, edges)
    tree = fit_gini_tree(Xb, y, w, params["max_depth"])
    return {"edges": edges, "tree": tree}


def _predict_decision_tree(state, X):
    Xb = apply_bin_edges(X, state["edges"])
    return predict_tree(state["tree"], Xb)


def _fit_random_forest(X, y, w, params, seed):
    n, d = X.shape
    edges = fit_bin_edges(X, params["nbins"])
    Xb = apply_bin_edges(X, edges)
    importance = np.zeros(d)
    n_draw = max(1, int(round(params["sample_rate"] * n)))
    n_feat = max(1, int(round(params["col_sample_rate_per_tree"] * d)))
    trees = []
    for child in np.random.SeedSequence(seed).spawn(params["ntrees"]):
        rng = np.random.default_rng(child)
        rows = rng.integers(0, n, size=n_draw)
        feats = np.sort(rng.choice(d, size=n_feat, replace=False))
        trees.append(
            fit_gini_tree(Xb[rows], y[rows], w[rows], params["max_depth"],
                          features=feats, importance=importance)
        )
    return {"edges": edges, "trees": trees, "importance": importance}


def _predict_random_forest(state, X):
    Xb = apply_bin_edges(X, state["edges"])
    acc = np.zeros(X.shape[0])
    for tree in state["trees"]:
        acc += predict_tree(tree, Xb)
    return acc / len(state["trees"])


def _fit_gbt(X, y, w, params, seed):
    n, d = X.shape
    edges = fit_bin_edges(X, params["nbins"])
    Xb = apply_bin_edges(X, edges)
    W = float(w.sum())
    p0 = float(np.clip((w * y).sum() / W, 1e-6, 1.0 - 1e-6))
    f0 = math.log(p0 / (1.0 - p0))
    F = np.full(n, f0)
    lr = params["learning_rate"]
    n_draw = max(2, int(round(params["sample_rate"] * n)))
    n_draw = min(n_draw, n)
    n_feat = max(1, int(round(params["col_sample_rate_per_tree"] * d)))
    trees = []
    yf = y.astype(float)
    for child in np.random.SeedSequence(seed).spawn(params["ntrees"]):
        rng = np.random.default_rng(child)
        p = _sigmoid(F)
        g = w * (p - yf)
        h = w * p * (1.0 - p)
        rows = rng.choice(n, size=n_draw, replace=False)
        feats = np.sort(rng.choice(d, size=n_feat, replace=False))
        tree = fit_second_order_tree(Xb[rows], g[rows], h[rows],
                                     params["max_depth"], features=feats)
        F = F + lr * predict_tree(tree, Xb)
        trees.append(tree)
    return {"edges": edges, "trees": trees, "f0": f0, "learning_rate": lr}


def _predict_gbt(state, X):
    Xb = apply_bin_edges(X, state["edges"])
    F = np.full(X.shape[0], state["f0"])
    for tree in state["trees"]:
        F += state["learning_rate"] * predict_tree(tree, Xb)
    return _sigmoid(F)


def _fista_logistic(X, y, w, alpha, lam, max_iter=500, tol=1e-8):
    """Elastic-net logistic regression; L1 part handled by soft threshold."""
    n, d = X.shape
    W = float(w.sum())
    sw = np.sqrt(w / W)
    Xa = np.concatenate([X * sw[:, None], sw[:, None]], axis=1)
    v = np.ones(d + 1) / math.sqrt(d + 1)
    for _ in range(100):
        v2 = Xa.T @ (Xa @ v)
        norm = np.linalg.norm(v2)
        if norm == 0:
            break
        v = v2 / norm
    sigma2 = float(v @ (Xa.T @ (Xa @ v)))
    step = 1.0 / (sigma2 / 4.0 + lam * (1.0 - alpha) + 1e-12)
    yf = y.astype(float)
    beta = np.zeros(d)
    b = 0.0
    zb, z0, t = beta.copy(), b, 1.0
    for _ in range(max_iter):
        p = _sigmoid(X @ zb + z0)
        r = w * (p - yf) / W
        grad = X.T @ r + lam * (1.0 - alpha) * zb
        nb = zb - step * grad
        nb = np.sign(nb) * np.maximum(np.abs(nb) - step * lam * alpha, 0.0)
        n0 = z0 - step * float(r.sum())
        t_next = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
        mom = (t - 1.0) / t_next
        zb = nb + mom * (nb - beta)
        z0 = n0 + mom * (n0 - b)
        delta = max(float(np.max(np.abs(nb - beta))) if d else 0.0, abs(n0 - b))
        beta, b, t = nb, n0, t_next
        if delta < tol:
            break
    return beta, b


def _log_loss(p, y, w):
    p = np.clip(p, _PROBA_FLOOR, 1.0 - _PROBA_FLOOR)
    return float(-(w * (y * np.log(p) + (1 - y) * np.log(1 - p))).sum() / w.sum())


def _cv_lambda(X, y, w, alpha, seed, n_folds=3):
    """Pick the penalty strength by stratified cross-validated log loss."""
    rng = np.random.default_rng(seed)
    folds = np.empty(len(y), dtype=int)
    for c in (0, 1):
        idx = np.flatnonzero(y == c)
        rng.shuffle(idx)
        folds[idx] = np.arange(len(idx)) % n_folds
    best_lam, best_loss = None, None
    for lam in GLM_LAMBDA_GRID:
        losses = []
        for k in range(n_folds):
            tr, te = folds != k, folds == k
            if len(np.unique(y[tr])) < 2 or not te.any():
                continue
            beta, b = _fista_logistic(X[tr], y[tr], w[tr], alpha, lam)
            losses.append(_log_loss(_sigmoid(X[te] @ beta + b), y[te], w[te]))
        if not losses:
            continue
        loss = float(np.mean(losses))
        # ties favor the stronger penalty; the grid ascends
        if best_loss is None or loss <= best_loss:
            best_lam, best_loss = lam, loss
    return best_lam if best_lam is not None else 1e-3


def _fit_glm(X, y, w, params, seed):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd == 0, 1.0, sd)
    Xs = (X - mu) / sd
    alpha = params["alpha"]
    lam = params["lambda_"]
    if lam is None:
        lam = _cv_lambda(Xs, y, w, alpha, seed)
    beta, b = _fista_logistic(Xs, y, w, alpha, lam)
    return {"mu": mu, "sd": sd, "beta": beta, "intercept": b,
            "alpha": alpha, "lambda_": lam}


def _predict_glm(state, X):
    Xs = (X - state["mu"]) / state["sd"]
    return _sigmoid(Xs @ state["beta"] + state["intercept"])


_FITTERS = {
    "naive_bayes": _fit_naive_bayes,
    "decision_tree": _fit_decision_tree,
    "random_forest": _fit_random_forest,
    "gbt": _fit_gbt,
    "glm": _fit_glm,
}

_PREDICTORS = {
    "naive_bayes": _predict_naive_bayes,
    "decision_tree": _predict_decision_tree,
    "random_forest": _predict_random_forest,
    "gbt": _predict_gbt,
    "glm": _predict_glm,
}


def fit(config, train, seed=0):
    """Fit one classifier on labeled examples."""
    X, y, w = design_matrix(train)
    _check_training(X, y)
    params = config.resolved()
    state = _FITTERS[config.kind](X, y, w, params, seed)
    return ClassifierModel(config.kind, X.shape[1], seed, state)


def predict_proba_matrix(model, X):
    """Positive-class probabilities for a 2-D probe matrix."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DimensionMismatchError(
            f"expected probe matrix with {model.n_features} columns"
        )
    return _PREDICTORS[model.kind](model.state, X)


def predict_proba(model, x):
    """Positive-class probability of one feature vector (or rows of a matrix)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != model.n_features:
            raise DimensionMismatchError(
                f"expected {model.n_features} features, got {x.shape[0]}"
            )
        return float(predict_proba_matrix(model, x[None, :])[0])
    return predict_proba_matrix(model, x)


def evaluate(model, test, threshold=0.5):
    """Confusion counts and derived metrics at a probability threshold."""
    if not test:
        raise EmptyTrainingError("test set is empty")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    X, y, _ = design_matrix(test)
    if np.any(y < 0):
        raise UnknownLabelValueError("test labels must be 0 or 1")
    pred = predict_proba_matrix(model, X) >= threshold
    actual = y == 1
    tp = int(np.sum(pred & actual))
    fp = int(np.sum(pred & ~actual))
    fn = int(np.sum(~pred & actual))
    tn = int(np.sum(~pred & ~actual))
    return Metrics.from_counts(tp, fp, fn, tn)


def resample(examples, strategy="both", target_ratio=0.5, seed=0):
    """Rebalance classes toward target_ratio = minority / majority.

    Oversampling duplicates minority rows drawn with replacement;
    undersampling keeps a uniform subset of the majority; ``both`` moves
    each class to the geometric mean of its current and required count.
    Feature vectors are never altered, only multiplicities.
    """
    if strategy not in ("oversample", "undersample", "both"):
        raise ValueError(f"unknown strategy {strategy!r}")
    if not 0.0 < target_ratio <= 1.0:
        raise ValueError("target_ratio must lie in (0, 1]")
    labeled = [ex for ex in examples if ex.label in (0, 1)]
    passthrough = [ex for ex in examples if ex.label == -1]
    pos = [ex for ex in labeled if ex.label == 1]
    neg = [ex for ex in labeled if ex.label == 0]
    if not pos or not neg:
        raise SingleClassError("resampling needs both classes present")
    minority, majority = (pos, neg) if len(pos) <= len(neg) else (neg, pos)
    n_min, n_maj = len(minority), len(majority)
    if n_min / n_maj >= target_ratio:
        return list(examples)
    rng = np.random.default_rng(seed)
    if strategy == "oversample":
        new_min, new_maj = int(round(target_ratio * n_maj)), n_maj
    elif strategy == "undersample":
        new_min, new_maj = n_min, int(round(n_min / target_ratio))
    else:
        new_min = int(round(math.sqrt(n_min * target_ratio * n_maj)))
        new_maj = int(round(math.sqrt(n_maj * n_min / target_ratio)))
    kept_majority = majority
    if new_maj < n_maj:
        keep = np.sort(rng.choice(n_maj, size=new_maj, replace=False))
        kept_majority = [majority[i] for i in keep]
    extra = [minority[i] for i in rng.integers(0, n_min, size=new_min - n_min)]
    return kept_majority + minority + extra + passthrough


def feature_importance(model, encoder=None, top_k=None):
    """Normalized mean-decrease-in-impurity importances of a forest.

    One-hot blocks collapse back onto their source feature when the
    encoder is supplied.  Returns (name, importance) sorted descending.
    """
    if model.kind != "random_forest":
        raise WrongModelKindError("feature importance requires a random forest")
    raw = np.asarray(model.state["importance"], dtype=float)
    if encoder is not None:
        if encoder.n_dims != model.n_features:
            raise DimensionMismatchError("encoder does not match the model")
        totals = {}
        for name in encoder.feature_names:
            totals[name] = 0.0
        for j, src in enumerate(encoder.dimension_sources):
            totals[src] += raw[j]
        names = list(totals)
        values = np.array([totals[n] for n in names])
    else:
        names = [f"x{j}" for j in range(len(raw))]
        values = raw
    total = values.sum()
    if total <= 0:
        values = np.full(len(values), 1.0 / len(values))
    else:
        values = values / total
    order = sorted(range(len(names)), key=lambda i: (-values[i], names[i]))
    ranked = [(names[i], float(values[i])) for i in order]
    return ranked[:top_k] if top_k is not None else ranked


def write_importance_csv(ranked, path):
    """(rank, feature, importance) table."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "feature", "importance"])
        for i, (name, imp) in enumerate(ranked, start=1):
            writer.writerow([i, name, repr(float(imp))])


def _edges_to_json(edges):
    return [e.tolist() for e in edges]


def _edges_from_json(data):
    return [np.array(e, dtype=float) for e in data]


def _state_to_json(kind, state):
    if kind == "naive_bayes":
        return {
            "edges": _edges_to_json(state["edges"]),
            "log_prior": state["log_prior"].tolist(),
            "log_like": [[t.tolist() for t in tables] for tables in state["log_like"]],
        }
    if kind == "decision_tree":
        return {"edges": _edges_to_json(state["edges"]), "tree": state["tree"].to_dict()}
    if kind == "random_forest":
        return {
            "edges": _edges_to_json(state["edges"]),
            "trees": [t.to_dict() for t in state["trees"]],
            "importance": state["importance"].tolist(),
        }
    if kind == "gbt":
        return {
            "edges": _edges_to_json(state["edges"]),
            "trees": [t.to_dict() for t in state["trees"]],
            "f0": state["f0"],
            "learning_rate": state["learning_rate"],
        }
    return {
        "mu": state["mu"].tolist(),
        "sd": state["sd"].tolist(),
        "beta": state["beta"].tolist(),
        "intercept": state["intercept"],
        "alpha": state["alpha"],
        "lambda": state["lambda_"],
    }


def _state_from_json(kind, data):
    if kind == "naive_bayes":
        return {
            "edges": _edges_from_json(data["edges"]),
            "log_prior": np.array(data["log_prior"], dtype=float),
            "log_like": [
                [np.array(t, dtype=float) for t in tables]
                for tables in data["log_like"]
            ],
        }
    if kind == "decision_tree":
        return {
            "edges": _edges_from_json(data["edges"]),
            "tree": Tree.from_dict(data["tree"]),
        }
    if kind == "random_forest":
        return {
            "edges": _edges_from_json(data["edges"]),
            "trees": [Tree.from_dict(t) for t in data["trees"]],
            "importance": np.array(data["importance"], dtype=float),
        }
    if kind == "gbt":
        return {
            "edges": _edges_from_json(data["edges"]),
            "trees": [Tree.from_dict(t) for t in data["trees"]],
            "f0": data["f0"],
            "learning_rate": data["learning_rate"],
        }
    return {
        "mu": np.array(data["mu"], dtype=float),
        "sd": np.array(data["sd"], dtype=float),
        "beta": np.array(data["beta"], dtype=float),
        "intercept": data["intercept"],
        "alpha": data["alpha"],
        "lambda_": data["lambda"],
    }


def save_model(model, path):
    """Versioned, self-describing JSON dump of a fitted model."""
    doc = {
        "format": "microlink-model",
        "version": 1,
        "kind": model.kind,
        "n_features": model.n_features,
        "seed": model.seed,
        "state": _state_to_json(model.kind, model.state),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "microlink-model":
        raise ValueError("not a model file")
    if doc.get("version") != 1:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    state = _state_from_json(doc["kind"], doc["state"])
    return ClassifierModel(doc["kind"], doc["n_features"], doc["seed"], state)
