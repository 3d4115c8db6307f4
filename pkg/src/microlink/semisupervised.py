"""EM-style semi-supervised training around any classifier or ensemble.

The loop alternates an M-step (fit on labeled plus currently pseudo-labeled
data) with an E-step (re-predict the unlabeled pool).  Convergence is
measured as pseudo-label stability: the fraction of unlabeled points whose
hard label changed between consecutive E-steps.  True labels are never
touched.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .classifiers import ModelConfig, fit
from .encoding import LabeledExample, design_matrix
from .ensemble import (
    EnsembleSpec,
    evaluate_model,
    predict_proba_any,
    train_ensemble,
)
from .errors import SingleClassLabeledError

PSEUDO_LABEL_MODES = ("hard", "soft_weights")


@dataclass(frozen=True)
class EmConfig:
    """Loop controls; the defaults include every unlabeled point each round."""

    max_iter: int = 20
    convergence_tol: float = 0.001
    pseudo_label_mode: str = "hard"
    confidence_floor: float = 0.5

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0.0 <= self.convergence_tol < 1.0:
            raise ValueError("convergence_tol must lie in [0, 1)")
        if self.pseudo_label_mode not in PSEUDO_LABEL_MODES:
            raise ValueError(f"unknown pseudo_label_mode {self.pseudo_label_mode!r}")
        if not 0.5 <= self.confidence_floor < 1.0:
            raise ValueError("confidence_floor must lie in [0.5, 1)")


@dataclass(frozen=True)
class EmIteration:
    """One loop round: stability plus optional validation metrics."""

    iteration: int
    changed_fraction: float
    metrics: object = None


def fit_any(spec, train, seed=0):
    """Fit either a plain classifier config or an ensemble spec."""
    if isinstance(spec, EnsembleSpec):
        return train_ensemble(spec, train, seed)
    if isinstance(spec, ModelConfig):
        return fit(spec, train, seed)
    raise TypeError(f"expected EnsembleSpec or ModelConfig, got {type(spec)!r}")


def _pseudo_examples(unlabeled, probs, pseudo, cfg):
    out = []
    if cfg.pseudo_label_mode == "soft_weights":
        for ex, p in zip(unlabeled, probs):
            out.append(LabeledExample(ex.features, 1, ex.weight * float(p), ex.source_id))
            out.append(LabeledExample(ex.features, 0, ex.weight * float(1.0 - p), ex.source_id))
        return out
    floor = cfg.confidence_floor
    for ex, p, lab in zip(unlabeled, probs, pseudo):
        # points the model is unsure about sit this round out
        if floor > 0.5 and (1.0 - floor) < p < floor:
            continue
        out.append(LabeledExample(ex.features, int(lab), ex.weight, ex.source_id))
    return out


def em_train(labeled, unlabeled, spec, cfg=None, valid=None, seed=0):
    """Semi-supervised fit; returns (final model, per-iteration history).

    With an empty unlabeled pool this degenerates to the plain supervised
    fit under the same seed.  The M-step reuses that seed every round so
    a stabilized pseudo-label set reproduces the same model.
    """
    cfg = cfg or EmConfig()
    _, y_lab, _ = design_matrix(labeled)
    if len(np.unique(y_lab[y_lab >= 0])) < 2 or np.any(y_lab < 0):
        raise SingleClassLabeledError(
            "labeled set must contain both classes and no unlabeled rows"
        )
    model = fit_any(spec, labeled, seed)
    if not unlabeled:
        return model, []
    X_unl = np.stack([ex.features for ex in unlabeled])
    history = []
    pseudo = None
    for iteration in range(1, cfg.max_iter + 1):
        probs = predict_proba_any(model, X_unl)
        new_pseudo = probs >= 0.5
        changed = 1.0 if pseudo is None else float(np.mean(new_pseudo != pseudo))
        pseudo = new_pseudo
        if changed < cfg.convergence_tol:
            metrics = evaluate_model(model, valid) if valid else None
            history.append(EmIteration(iteration, changed, metrics))
            break
        augmented = labeled + _pseudo_examples(unlabeled, probs, pseudo, cfg)
        model = fit_any(spec, augmented, seed)
        metrics = evaluate_model(model, valid) if valid else None
        history.append(EmIteration(iteration, changed, metrics))
    return model, history


def write_history_csv(history, path):
    """(iteration, changed_fraction, validation metrics) per loop round."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "iteration", "changed_fraction", "valid_accuracy",
            "valid_precision", "valid_recall", "valid_f1",
        ])
        for item in history:
            m = item.metrics
            writer.writerow([
                item.iteration, repr(item.changed_fraction),
                repr(m.accuracy) if m else "",
                repr(m.precision) if m else "",
                repr(m.recall) if m else "",
                repr(m.f1) if m else "",
            ])


def _with_delta(value, base):
    return f"{value:.3f} ({value - base:.3f})"


def em_comparison_rows(supervised, augmented):
    """Supervised vs EM-augmented metrics, deltas in parentheses."""
    return [
        {
            "method": "supervised ensemble",
            "accuracy": f"{supervised.accuracy:.3f}",
            "precision": f"{supervised.precision:.3f}",
            "recall": f"{supervised.recall:.3f}",
            "f1": f"{supervised.f1:.3f}",
        },
        {
            "method": "supervised ensemble + EM",
            "accuracy": _with_delta(augmented.accuracy, supervised.accuracy),
            "precision": _with_delta(augmented.precision, supervised.precision),
            "recall": _with_delta(augmented.recall, supervised.recall),
            "f1": _with_delta(augmented.f1, supervised.f1),
        },
    ]


def compare_em(labeled, unlabeled, spec, cfg, test, seed=0):
    """Train supervised-only and EM-augmented models, evaluate both.

    Returns (supervised metrics, EM metrics, comparison rows).
    """
    supervised = fit_any(spec, labeled, seed)
    em_model, _ = em_train(labeled, unlabeled, spec, cfg, valid=None, seed=seed)
    sup_metrics = evaluate_model(supervised, test)
    em_metrics = evaluate_model(em_model, test)
    return sup_metrics, em_metrics, em_comparison_rows(sup_metrics, em_metrics)


def write_em_comparison_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "accuracy", "precision", "recall", "F1-measure"])
        for row in rows:
            writer.writerow([
                row["method"], row["accuracy"], row["precision"],
                row["recall"], row["f1"],
            ])
