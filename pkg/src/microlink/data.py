"""Typed tabular datasets, CSV ingestion, and preprocessing.

Records hold a value per schema feature: a category string, a finite float,
or ``None`` for missing.  Preprocessing covers per-category mean imputation,
log1p normalization of highly skewed columns, redundancy pruning, and the
tokenization of common features into shingle sets for Jaccard similarity.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllMissingColumnError,
    DuplicateIdError,
    EmptyFileError,
    MissingColumnError,
    NegativeValueError,
)

KINDS = ("categorical", "continuous", "date", "identifier")
ROLES = ("common", "open_only", "support_only", "label", "id")

# A cell value is a category string, a finite float, or None when missing.
# A shingle set is a frozenset of "feature=value" tokens.
ShingleSet = frozenset


@dataclass(frozen=True)
class FeatureSpec:
    """Name, kind, and role of one dataset feature."""

    name: str
    kind: str
    role: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r} for feature {self.name!r}")
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r} for feature {self.name!r}")


@dataclass(frozen=True)
class Record:
    """One row: an id plus a value for every schema feature."""

    id: str
    values: dict = field(compare=False)

    def get(self, name):
        return self.values[name]


class TabularDataset:
    """An ordered schema plus rows conforming to it.

    Exactly one feature must carry ``role='id'``; its values are unique
    across rows.  Number cells must be finite.
    """

    def __init__(self, schema, rows):
        schema = list(schema)
        rows = list(rows)
        if not rows:
            raise ValueError("dataset must contain at least one row")
        id_specs = [s for s in schema if s.role == "id"]
        if len(id_specs) != 1:
            raise ValueError("schema must contain exactly one role='id' feature")
        names = [s.name for s in schema]
        if len(set(names)) != len(names):
            raise ValueError("duplicate feature names in schema")
        name_set = set(names)
        seen = set()
        for row in rows:
            if set(row.values) != name_set:
                missing = name_set - set(row.values)
                extra = set(row.values) - name_set
                raise ValueError(
                    f"row {row.id!r} does not conform to schema "
                    f"(missing={sorted(missing)}, extra={sorted(extra)})"
                )
            if row.id in seen:
                raise DuplicateIdError(f"duplicate id {row.id!r}")
            seen.add(row.id)
            for spec in schema:
                v = row.values[spec.name]
                if isinstance(v, float) and not math.isfinite(v):
                    raise ValueError(f"non-finite value in {spec.name!r} of row {row.id!r}")
        self.schema = schema
        self.rows = rows
        self._by_name = {s.name: s for s in schema}
        self._id_feature = id_specs[0]

    def __len__(self):
        return len(self.rows)

    def feature(self, name):
        return self._by_name[name]

    @property
    def feature_names(self):
        return [s.name for s in self.schema]

    @property
    def id_feature(self):
        return self._id_feature

    def common_features(self):
        return [s for s in self.schema if s.role == "common"]

    def continuous_features(self):
        return [s for s in self.schema if s.kind == "continuous"]

    def categorical_features(self):
        return [s for s in self.schema if s.kind == "categorical"]

    def column(self, name):
        """Values of one feature, in row order."""
        return [row.values[name] for row in self.rows]

    def record(self, row_id):
        for row in self.rows:
            if row.id == row_id:
                return row
        raise KeyError(row_id)

    def records_by_id(self):
        return {row.id: row for row in self.rows}

    def with_rows(self, rows):
        return TabularDataset(self.schema, rows)

    def replace_column(self, name, values):
        """New dataset with one column replaced (values in row order)."""
        if len(values) != len(self.rows):
            raise ValueError("column length mismatch")
        rows = [
            Record(row.id, {**row.values, name: v})
            for row, v in zip(self.rows, values)
        ]
        return TabularDataset(self.schema, rows)

    def drop_features(self, names):
        names = set(names)
        schema = [s for s in self.schema if s.name not in names]
        rows = [
            Record(row.id, {k: v for k, v in row.values.items() if k not in names})
            for row in self.rows
        ]
        return TabularDataset(schema, rows)


def _parse_cell(cell, kind):
    if cell is None or cell == "":
        return None
    if kind == "continuous":
        try:
            v = float(cell)
        except ValueError:
            return None
        return v if math.isfinite(v) else None
    return cell


def load_csv(path, schema):
    """Load a UTF-8, comma-separated, headered CSV into a dataset.

    Empty cells and unparseable continuous cells become missing.  Columns
    not named by the schema are ignored.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFileError(f"{path}: no header row") from None
        positions = {}
        for spec in schema:
            if spec.name not in header:
                raise MissingColumnError(f"{path}: column {spec.name!r} not in header")
            positions[spec.name] = header.index(spec.name)
        id_name = next(s.name for s in schema if s.role == "id")
        rows = []
        for raw in reader:
            values = {}
            for spec in schema:
                pos = positions[spec.name]
                cell = raw[pos] if pos < len(raw) else ""
                values[spec.name] = _parse_cell(cell, spec.kind)
            rid = values[id_name]
            rows.append(Record("" if rid is None else str(rid), values))
    if not rows:
        raise EmptyFileError(f"{path}: no data rows")
    return TabularDataset(schema, rows)


def write_csv(ds, path):
    """Serialize a dataset; missing cells become empty strings."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        names = ds.feature_names
        writer.writerow(names)
        for row in ds.rows:
            out = []
            for name in names:
                v = row.values[name]
                if v is None:
                    out.append("")
                elif isinstance(v, float):
                    out.append(repr(v))
                else:
                    out.append(str(v))
            writer.writerow(out)


def impute_missing(ds, category_feature):
    """Replace missing continuous values by the mean within the same category.

    Categories with no observed value fall back to the global column mean.
    """
    spec = ds.feature(category_feature)
    if spec.kind != "categorical":
        raise ValueError(f"{category_feature!r} is not categorical")
    categories = ds.column(category_feature)
    result = ds
    for feat in ds.continuous_features():
        col = result.column(feat.name)
        present = [v for v in col if v is not None]
        if not present:
            raise AllMissingColumnError(f"column {feat.name!r} is entirely missing")
        if len(present) == len(col):
            continue
        global_mean = sum(present) / len(present)
        sums, counts = {}, {}
        for cat, v in zip(categories, col):
            if v is not None:
                sums[cat] = sums.get(cat, 0.0) + v
                counts[cat] = counts.get(cat, 0) + 1
        means = {cat: sums[cat] / counts[cat] for cat in counts}
        filled = [
            v if v is not None else means.get(cat, global_mean)
            for cat, v in zip(categories, col)
        ]
        result = result.replace_column(feat.name, filled)
    return result


def sample_skewness(values):
    """Adjusted Fisher-Pearson skewness with the sample standard deviation.

    Defined as 0 for constant columns and for fewer than 3 observations.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 3:
        return 0.0
    s = x.std(ddof=1)
    if s == 0.0:
        return 0.0
    return float(n / ((n - 1) * (n - 2)) * np.sum(((x - x.mean()) / s) ** 3))


def normalize_skewed(ds, skew_threshold):
    """log1p-transform continuous columns whose skewness exceeds the threshold.

    Returns ``(dataset, transformed_names)`` so reports can list what moved.
    """
    if skew_threshold <= 0:
        raise ValueError("skew_threshold must be positive")
    transformed = []
    result = ds
    for feat in ds.continuous_features():
        col = result.column(feat.name)
        present = [v for v in col if v is not None]
        if not present:
            continue
        if sample_skewness(present) > skew_threshold:
            if min(present) < 0:
                raise NegativeValueError(
                    f"column {feat.name!r} holds negative values; log1p undefined"
                )
            result = result.replace_column(
                feat.name, [None if v is None else math.log1p(v) for v in col]
            )
            transformed.append(feat.name)
    return result, transformed


def drop_redundant(ds, corr_threshold=0.98):
    """Drop zero-variance columns and near-duplicate continuous columns.

    Of a pair with pairwise |Pearson r| above the threshold, the later
    column in schema order is dropped.  Features with role ``id`` or
    ``label`` are never dropped.  Returns ``(dataset, dropped_names)``.
    """
    protected = {s.name for s in ds.schema if s.role in ("id", "label")}
    dropped = []
    for feat in ds.schema:
        if feat.name in protected:
            continue
        col = ds.column(feat.name)
        present = [v for v in col if v is not None]
        if len(set(present)) <= 1:
            dropped.append(feat.name)
    cont = [s for s in ds.continuous_features() if s.name not in protected and s.name not in dropped]
    for i, a in enumerate(cont):
        if a.name in dropped:
            continue
        col_a = ds.column(a.name)
        for b in cont[i + 1:]:
            if b.name in dropped:
                continue
            col_b = ds.column(b.name)
            pairs = [(x, y) for x, y in zip(col_a, col_b) if x is not None and y is not None]
            if len(pairs) < 2:
                continue
            xs = np.array([p[0] for p in pairs])
            ys = np.array([p[1] for p in pairs])
            if xs.std() == 0.0 or ys.std() == 0.0:
                continue
            r = float(np.corrcoef(xs, ys)[0, 1])
            if abs(r) > corr_threshold:
                dropped.append(b.name)
    if not dropped:
        return ds, []
    return ds.drop_features(dropped), dropped


@dataclass(frozen=True)
class Binning:
    """Declared bin edges and labels for one continuous feature.

    ``edges`` are the interior cut points; a value lands in
    ``labels[searchsorted(edges, v, side='right')]``.
    """

    feature: str
    edges: tuple
    labels: tuple

    def __post_init__(self):
        if len(self.labels) != len(self.edges) + 1:
            raise ValueError("need exactly len(edges)+1 labels")

    def index(self, v):
        return int(np.searchsorted(self.edges, v, side="right"))

    def label(self, v):
        return self.labels[self.index(v)]

    @property
    def n_bins(self):
        return len(self.labels)


def fit_binning(values, n_bins, feature, labels=None):
    """Quantile binning over the observed values of one feature."""
    present = sorted(v for v in values if v is not None)
    if not present:
        raise ValueError(f"no values to bin for {feature!r}")
    qs = [i / n_bins for i in range(1, n_bins)]
    edges = tuple(float(np.quantile(present, q)) for q in qs)
    if labels is None:
        labels = tuple(f"b{i}" for i in range(len(edges) + 1))
    return Binning(feature, edges, tuple(labels))


def tokenize_common(record, common, canon=None, binnings=None):
    """Build the shingle set of one record over its common features.

    One ``feature=value`` token per non-missing common feature; missing
    values yield no token.  Categorical values pass through the
    canonicalization map (identity by default) and continuous values are
    labeled by their declared binning.
    """
    canon = canon or {}
    binnings = binnings or {}
    tokens = set()
    for spec in common:
        v = record.values.get(spec.name)
        if v is None:
            continue
        if spec.kind == "continuous":
            if spec.name not in binnings:
                raise ValueError(f"continuous common feature {spec.name!r} needs a declared binning")
            label = binnings[spec.name].label(v)
        else:
            raw = str(v)
            label = canon.get(spec.name, {}).get(raw, raw)
        tokens.add(f"{spec.name}={label}")
    return frozenset(tokens)


def tokenize_dataset(ds, canon=None, binnings=None):
    """Shingle sets for every row, keyed by record id."""
    common = ds.common_features()
    return {row.id: tokenize_common(row, common, canon, binnings) for row in ds.rows}


def fit_common_binnings(ds, n_bins=10, declared=None):
    """Quantile binnings for all continuous common features.

    ``declared`` entries (a mapping name -> Binning) take precedence over
    fitted quantile bins.
    """
    declared = declared or {}
    binnings = {}
    for spec in ds.common_features():
        if spec.kind != "continuous":
            continue
        if spec.name in declared:
            binnings[spec.name] = declared[spec.name]
        else:
            binnings[spec.name] = fit_binning(ds.column(spec.name), n_bins, spec.name)
    return binnings
