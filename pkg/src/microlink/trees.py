"""Histogram decision trees shared by the tree-based learners.

Continuous features are discretized once into quantile bins; split search
then scans bin boundaries with cumulative-sum histograms instead of
sorting rows.  Trees are stored as flat arrays and route whole matrices
at prediction time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EPS = 1e-12


def fit_bin_edges(X, nbins):
    """Per-column interior quantile edges; constant columns get none."""
    if nbins < 2:
        raise ValueError("nbins must be at least 2")
    qs = np.linspace(0.0, 1.0, nbins + 1)[1:-1]
    edges = []
    for j in range(X.shape[1]):
        col = X[:, j]
        if col.min() == col.max():
            edges.append(np.empty(0))
        else:
            edges.append(np.unique(np.quantile(col, qs)))
    return edges


def apply_bin_edges(X, edges):
    """Bin codes per column; code k means edges[k-1] <= x < edges[k]."""
    out = np.empty(X.shape, dtype=np.int32)
    for j, e in enumerate(edges):
        out[:, j] = np.searchsorted(e, X[:, j], side="right")
    return out


@dataclass
class Tree:
    """Flat-array tree; feature -1 marks a leaf, else route left on
    code <= threshold."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            feature=np.array(d["feature"], dtype=np.int32),
            threshold=np.array(d["threshold"], dtype=np.int32),
            left=np.array(d["left"], dtype=np.int32),
            right=np.array(d["right"], dtype=np.int32),
            value=np.array(d["value"], dtype=float),
        )


class _Builder:
    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []

    def add(self, value):
        self.feature.append(-1)
        self.threshold.append(-1)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.value) - 1

    def split(self, slot, feat, thresh, left, right):
        self.feature[slot] = feat
        self.threshold[slot] = thresh
        self.left[slot] = left
        self.right[slot] = right

    def build(self):
        return Tree(
            feature=np.array(self.feature, dtype=np.int32),
            threshold=np.array(self.threshold, dtype=np.int32),
            left=np.array(self.left, dtype=np.int32),
            right=np.array(self.right, dtype=np.int32),
            value=np.array(self.value, dtype=float),
        )


def _best_gini_split(Xb, y_pos, w, idx, features, pos, neg):
    """Best (gain, feature, threshold) over the node's rows, or None."""
    total = pos + neg
    parent = 1.0 - (pos * pos + neg * neg) / (total * total)
    wp = w[idx] * y_pos[idx]
    wn = w[idx] * (1.0 - y_pos[idx])
    best = None
    n_node = idx.size
    for j in features:
        codes = Xb[idx, j]
        nb = int(codes.max()) + 1 if n_node else 1
        if nb < 2:
            continue
        counts = np.bincount(codes, minlength=nb)
        hp = np.bincount(codes, weights=wp, minlength=nb)
        hn = np.bincount(codes, weights=wn, minlength=nb)
        cl = np.cumsum(counts)[:-1]
        valid = (cl > 0) & (cl < n_node)
        if not valid.any():
            continue
        cpos = np.cumsum(hp)[:-1]
        cneg = np.cumsum(hn)[:-1]
        lt = cpos + cneg
        rpos = pos - cpos
        rneg = neg - cneg
        rt = rpos + rneg
        with np.errstate(divide="ignore", invalid="ignore"):
            child = (
                lt - (cpos * cpos + cneg * cneg) / np.where(lt > 0, lt, 1.0)
                + rt - (rpos * rpos + rneg * rneg) / np.where(rt > 0, rt, 1.0)
            ) / total
        gains = np.where(valid, parent - child, -np.inf)
        t = int(np.argmax(gains))
        if best is None or gains[t] > best[0]:
            best = (float(gains[t]), int(j), t)
    return best


def fit_gini_tree(Xb, y, w, max_depth, features=None, importance=None,
                  allow_zero_gain=True):
    """Weighted Gini classification tree on pre-binned data.

    Leaves hold the weighted positive fraction.  Zero-gain splits are
    accepted on impure nodes so symmetric patterns (XOR-like) still
    resolve within the depth budget.
    """
    n = Xb.shape[0]
    y_pos = (y == 1).astype(float)
    if features is None:
        features = np.arange(Xb.shape[1])
    builder = _Builder()
    root = builder.add(0.0)
    stack = [(root, np.arange(n), 0)]
    total_w = float(w.sum())
    while stack:
        slot, idx, depth = stack.pop()
        pos = float((w[idx] * y_pos[idx]).sum())
        neg = float(w[idx].sum()) - pos
        total = pos + neg
        builder.value[slot] = pos / total if total > 0 else 0.5
        if depth >= max_depth or idx.size < 2 or pos <= 0 or neg <= 0:
            continue
        if total <= 0:
            continue
        best = _best_gini_split(Xb, y_pos, w, idx, features, pos, neg)
        if best is None:
            continue
        gain, feat, thresh = best
        if gain <= _EPS and not (allow_zero_gain and gain >= -_EPS):
            continue
        if importance is not None and gain > 0:
            importance[feat] += total / total_w * gain
        mask = Xb[idx, feat] <= thresh
        left = builder.add(0.0)
        right = builder.add(0.0)
        builder.split(slot, feat, thresh, left, right)
        stack.append((left, idx[mask], depth + 1))
        stack.append((right, idx[~mask], depth + 1))
    return builder.build()


def _best_second_order_split(Xb, g, h, idx, features, lam, min_gain):
    G = float(g[idx].sum())
    H = float(h[idx].sum())
    base = G * G / (H + lam)
    best = None
    n_node = idx.size
    for j in features:
        codes = Xb[idx, j]
        nb = int(codes.max()) + 1 if n_node else 1
        if nb < 2:
            continue
        counts = np.bincount(codes, minlength=nb)
        hg = np.bincount(codes, weights=g[idx], minlength=nb)
        hh = np.bincount(codes, weights=h[idx], minlength=nb)
        cl = np.cumsum(counts)[:-1]
        valid = (cl > 0) & (cl < n_node)
        if not valid.any():
            continue
        GL = np.cumsum(hg)[:-1]
        HL = np.cumsum(hh)[:-1]
        GR = G - GL
        HR = H - HL
        gains = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - base)
        gains = np.where(valid, gains, -np.inf)
        t = int(np.argmax(gains))
        if gains[t] > min_gain and (best is None or gains[t] > best[0]):
            best = (float(gains[t]), int(j), t)
    return best


def fit_second_order_tree(Xb, g, h, max_depth, lam=1.0, features=None,
                          min_gain=1e-12):
    """Regression tree on gradient/hessian sums; leaf = -G / (H + lam).

    Splits require strictly positive gain, matching common boosting
    practice.
    """
    n = Xb.shape[0]
    if features is None:
        features = np.arange(Xb.shape[1])
    builder = _Builder()
    root = builder.add(0.0)
    stack = [(root, np.arange(n), 0)]
    while stack:
        slot, idx, depth = stack.pop()
        G = float(g[idx].sum())
        H = float(h[idx].sum())
        builder.value[slot] = -G / (H + lam)
        if depth >= max_depth or idx.size < 2:
            continue
        best = _best_second_order_split(Xb, g, h, idx, features, lam, min_gain)
        if best is None:
            continue
        _, feat, thresh = best
        mask = Xb[idx, feat] <= thresh
        left = builder.add(0.0)
        right = builder.add(0.0)
        builder.split(slot, feat, thresh, left, right)
        stack.append((left, idx[mask], depth + 1))
        stack.append((right, idx[~mask], depth + 1))
    return builder.build()


def predict_tree(tree, Xb):
    """Leaf values for every row of a pre-binned matrix."""
    out = np.empty(Xb.shape[0])
    stack = [(0, np.arange(Xb.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        feat = tree.feature[node]
        if feat < 0:
            out[idx] = tree.value[node]
            continue
        mask = Xb[idx, feat] <= tree.threshold[node]
        stack.append((tree.left[node], idx[mask]))
        stack.append((tree.right[node], idx[~mask]))
    return out
