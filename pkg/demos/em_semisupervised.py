"""What the EM loop buys when labels are scarce.

Two overlapping Gaussian classes, 2% labeled.  The loop pseudo-labels
the pool and refits until the pseudo-labels stop moving; the final
model is compared against training on the labels alone.
"""

import numpy as np

from microlink.classifiers import ModelConfig
from microlink.encoding import LabeledExample
from microlink.semisupervised import (
    EmConfig,
    compare_em,
    em_train,
)

rng = np.random.default_rng(0)
GAP = 2.0


def draw(n, seed):
    r = np.random.default_rng(seed)
    y = r.integers(0, 2, size=n)
    X = r.normal(0.0, 1.0, (n, 2))
    X[:, 0] += GAP * (y - 0.5)
    return X, y


X, y = draw(1000, 1)
Xt, yt = draw(500, 2)

labeled, pool = [], []
per_class = {0: 0, 1: 0}
for i in range(len(y)):
    c = int(y[i])
    if per_class[c] < 10:
        per_class[c] += 1
        labeled.append(LabeledExample(X[i], c, 1.0, f"l{i}"))
    else:
        pool.append(LabeledExample(X[i], -1, 1.0, f"u{i}"))
test = [LabeledExample(Xt[i], int(yt[i]), 1.0, f"t{i}") for i in range(500)]

spec = ModelConfig("naive_bayes")
cfg = EmConfig(max_iter=20)

_, history = em_train(labeled, pool, spec, cfg, valid=test, seed=3)
print(f"{len(labeled)} labeled, {len(pool)} unlabeled")
print()
print("iter  changed   test F1")
for h in history:
    print(f"{h.iteration:>4}  {h.changed_fraction:7.4f}   {h.metrics.f1:.4f}")

print()
sup, em, rows = compare_em(labeled, pool, spec, cfg, test, seed=3)
for row in rows:
    print(f"{row['method']:<28} recall {row['recall']}  F1 {row['f1']}")
