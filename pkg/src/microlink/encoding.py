"""Dense feature encoding for the learners.

Categorical features become one-hot blocks over the level set seen at fit
time; continuous features are standardized with the fit-time mean and std.
The encoder is fitted once on training data and reused on test and
unlabeled data so every example lives in the same vector space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UnknownLabelValueError

POSITIVE, NEGATIVE, UNLABELED = 1, 0, -1


@dataclass
class LabeledExample:
    """One encoded training point; label -1 marks an unlabeled example."""

    features: np.ndarray
    label: int
    weight: float = 1.0
    source_id: str = ""

    def __post_init__(self):
        if self.label not in (POSITIVE, NEGATIVE, UNLABELED):
            raise UnknownLabelValueError(f"label must be 1, 0, or -1, got {self.label}")
        if self.weight < 0:
            raise ValueError("weight must be non-negative")


@dataclass
class Encoder:
    """Fitted one-hot and standardization state, reusable on new data."""

    feature_names: list
    categorical_levels: dict = field(default_factory=dict)
    continuous_stats: dict = field(default_factory=dict)
    dimension_names: list = field(default_factory=list)
    # maps each output dimension back to its source feature, for
    # aggregating one-hot importances
    dimension_sources: list = field(default_factory=list)

    @property
    def n_dims(self):
        return len(self.dimension_names)

    def transform_value(self, name, value):
        if name in self.categorical_levels:
            levels = self.categorical_levels[name]
            block = np.zeros(len(levels))
            # unseen categories and missing values stay an all-zeros block
            if value is not None and value in levels:
                block[levels[value]] = 1.0
            return block
        mean, std = self.continuous_stats[name]
        if value is None:
            return np.zeros(1)
        return np.array([(float(value) - mean) / std])

    def transform_record(self, record):
        parts = [self.transform_value(name, record.values.get(name)) for name in self.feature_names]
        return np.concatenate(parts) if parts else np.zeros(0)


def _label_of(value, positive_value):
    if value is None:
        return UNLABELED
    return POSITIVE if value == positive_value else NEGATIVE


def fit_encoder(ds, feature_names=None, exclude=()):
    """Learn level sets and moments from a training dataset."""
    if feature_names is None:
        feature_names = [
            f.name for f in ds.schema
            if f.role not in ("id", "label") and f.name not in exclude
        ]
    enc = Encoder(feature_names=list(feature_names))
    for name in enc.feature_names:
        feat = ds.feature(name)
        col = ds.column(name)
        if feat.kind == "continuous":
            vals = np.array([v for v in col if v is not None], dtype=float)
            mean = float(vals.mean()) if vals.size else 0.0
            std = float(vals.std(ddof=0)) if vals.size else 1.0
            if std == 0.0:
                std = 1.0
            enc.continuous_stats[name] = (mean, std)
            enc.dimension_names.append(name)
            enc.dimension_sources.append(name)
        else:
            levels = sorted({str(v) for v in col if v is not None})
            enc.categorical_levels[name] = {lv: i for i, lv in enumerate(levels)}
            for lv in levels:
                enc.dimension_names.append(f"{name}={lv}")
                enc.dimension_sources.append(name)
    return enc


def encode(ds, label_feature=None, encoder=None, positive_value="1", exclude=()):
    """Encode a dataset into LabeledExamples plus the encoder used.

    With no label feature every example comes back unlabeled.  A label
    value equal to ``positive_value`` maps to 1, any other non-missing
    value to 0, and missing to unlabeled.
    """
    skip = set(exclude)
    if label_feature is not None:
        skip.add(label_feature)
    if encoder is None:
        encoder = fit_encoder(ds, exclude=tuple(skip))
    examples = []
    for rec in ds.rows:
        x = encoder.transform_record(rec)
        if label_feature is None:
            label = UNLABELED
        else:
            raw = rec.values.get(label_feature)
            label = _label_of(None if raw is None else str(raw), positive_value)
        examples.append(LabeledExample(x, label, 1.0, rec.id))
    return examples, encoder


def design_matrix(examples):
    """Stack examples into (X, y, w) arrays; y is -1 for unlabeled rows."""
    if not examples:
        return np.zeros((0, 0)), np.zeros(0, dtype=int), np.zeros(0)
    X = np.stack([ex.features for ex in examples])
    y = np.array([ex.label for ex in examples], dtype=int)
    w = np.array([ex.weight for ex in examples], dtype=float)
    return X, y, w
