"""Conditional-probability ranking of positive-classified candidates.

Scores log Pr(y) + sum_i log Pr(x_i|y) - sum_i log Pr(x_i) from
Laplace-smoothed contingency tables: the target y is quantile-binned, each
x feature is binned or treated by level, and a missing x value skips its
numerator and denominator factors symmetrically so candidates with
different missingness stay comparable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .data import fit_binning
from .errors import EmptyTrainingError, NoCandidatesError, UnfittedModelError

DEFAULT_Y_BINS = 4
DEFAULT_X_BINS = 10


@dataclass
class _FeatureTable:
    kind: str
    binning: object = None
    levels: dict = None
    log_like: np.ndarray = None
    log_evidence: np.ndarray = None

    def code(self, value):
        if value is None:
            return None
        if self.kind == "continuous":
            return self.binning.index(float(value))
        return self.levels.get(str(value))


@dataclass
class ConditionalProbabilityModel:
    """Smoothed prior, likelihood, and evidence tables over binned features."""

    y_feature: str
    x_features: list
    smoothing: float
    y_binning: object = None
    y_levels: dict = None
    log_prior: np.ndarray = None
    tables: dict = field(default_factory=dict)

    def y_code(self, y_value):
        if self.log_prior is None:
            raise UnfittedModelError("model has no fitted tables")
        if self.y_binning is not None:
            return self.y_binning.index(float(y_value))
        code = self.y_levels.get(str(y_value))
        if code is None:
            raise ValueError(f"unseen target value {y_value!r}")
        return code


def fit_cond_prob(train, y_feature, x_features, smoothing=1.0,
                  y_bins=DEFAULT_Y_BINS, x_bins=DEFAULT_X_BINS):
    """Estimate the scoring tables from a training dataset.

    Rows missing the target are dropped; rows missing an x value are
    dropped only from that feature's table.
    """
    if smoothing <= 0:
        raise ValueError("smoothing must be positive")
    model = ConditionalProbabilityModel(y_feature, list(x_features), smoothing)
    y_kind = train.feature(y_feature).kind
    rows = [r for r in train.rows if r.values.get(y_feature) is not None]
    if not rows:
        raise EmptyTrainingError("no rows with a target value")
    y_raw = [r.values[y_feature] for r in rows]
    if y_kind == "continuous":
        model.y_binning = fit_binning(y_raw, y_bins, y_feature)
        n_y = model.y_binning.n_bins
        y_codes = np.array([model.y_binning.index(float(v)) for v in y_raw])
    else:
        levels = sorted({str(v) for v in y_raw})
        model.y_levels = {lv: i for i, lv in enumerate(levels)}
        n_y = len(levels)
        y_codes = np.array([model.y_levels[str(v)] for v in y_raw])
    s = smoothing
    y_counts = np.bincount(y_codes, minlength=n_y).astype(float)
    model.log_prior = np.log((y_counts + s) / (y_counts.sum() + s * n_y))
    for name in model.x_features:
        kind = train.feature(name).kind
        values = [r.values.get(name) for r in rows]
        present = [(c, v) for c, v in zip(y_codes, values) if v is not None]
        if kind == "continuous":
            table = _FeatureTable(
                "continuous",
                binning=fit_binning([v for _, v in present], x_bins, name),
            )
            n_x = table.binning.n_bins
        else:
            levels = sorted({str(v) for _, v in present})
            table = _FeatureTable("categorical", levels={lv: i for i, lv in enumerate(levels)})
            n_x = max(len(levels), 1)
        counts = np.zeros((n_y, n_x))
        for c, v in present:
            counts[c, table.code(v)] += 1.0
        per_y = counts.sum(axis=1, keepdims=True)
        table.log_like = np.log((counts + s) / (per_y + s * n_x))
        totals = counts.sum(axis=0)
        table.log_evidence = np.log((totals + s) / (totals.sum() + s * n_x))
        model.tables[name] = table
    return model


def score(model, y_value, candidate):
    """Log-space conditional-probability score of one candidate record.

    Missing or unseen x values contribute no factor, to either side.
    """
    v = model.y_code(y_value)
    total = float(model.log_prior[v])
    for name in model.x_features:
        table = model.tables[name]
        code = table.code(candidate.values.get(name))
        if code is None:
            continue
        total += float(table.log_like[v, code]) - float(table.log_evidence[code])
    return total


@dataclass(frozen=True)
class RankedCandidate:
    """One scored candidate with its position in the ordering."""

    support_id: str
    log_score: float
    normalized_score: float
    rank: int


def rank_candidates(model, y_value, candidates, n=3):
    """Top-n candidates by score, ties broken by ascending record id.

    Normalized scores are the softmax of the log scores over the whole
    candidate set, so they sum to 1 regardless of the cutoff.
    """
    if not candidates:
        raise NoCandidatesError("no candidates to rank")
    if n < 1:
        raise ValueError("n must be at least 1")
    scored = [(score(model, y_value, c), c.id) for c in candidates]
    logs = np.array([ls for ls, _ in scored])
    shifted = np.exp(logs - logs.max())
    norm = shifted / shifted.sum()
    order = sorted(range(len(scored)), key=lambda i: (-scored[i][0], scored[i][1]))
    ranked = [
        RankedCandidate(scored[i][1], float(scored[i][0]), float(norm[i]), rank)
        for rank, i in enumerate(order, start=1)
    ]
    return ranked[:n]


def write_rankings_csv(rows, path):
    """(open_id, support_id, rank, log_score, normalized_score) table."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["open_id", "support_id", "rank", "log_score", "normalized_score"])
        for open_id, rc in rows:
            writer.writerow([
                open_id, rc.support_id, rc.rank,
                repr(rc.log_score), repr(rc.normalized_score),
            ])
