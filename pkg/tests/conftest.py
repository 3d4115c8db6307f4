"""Shared builders used across the test modules."""

import numpy as np

from microlink.encoding import LabeledExample


def blobs(n=120, seed=0, gap=4.0, d=2, weight=1.0):
    """Two well separated Gaussian clusters with labels 0 and 1."""
    rng = np.random.default_rng(seed)
    half = n // 2
    pts = np.vstack([
        rng.normal(0.0, 1.0, size=(half, d)),
        rng.normal(gap, 1.0, size=(n - half, d)),
    ])
    return [
        LabeledExample(pts[i].astype(float), int(i >= half), weight, f"r{i}")
        for i in range(n)
    ]


def xor_square(reps=30):
    """Four-corner XOR layout, each corner duplicated reps times.

    Not linearly separable; a depth-2 axis tree fits it exactly.
    """
    corners = [((0.0, 0.0), 0), ((1.0, 1.0), 0), ((0.0, 1.0), 1), ((1.0, 0.0), 1)]
    out = []
    i = 0
    for (a, b), label in corners:
        for _ in range(reps):
            out.append(LabeledExample(np.array([a, b]), label, 1.0, f"x{i}"))
            i += 1
    return out


def planted(n=200, seed=1, d=4):
    """Feature 0 equals the label; the other columns are pure noise."""
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    X = rng.normal(0.0, 1.0, size=(n, d))
    X[:, 0] = y.astype(float)
    return [LabeledExample(X[i].copy(), int(y[i]), 1.0, f"p{i}") for i in range(n)]
