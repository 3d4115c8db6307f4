"""All five base learners on one imbalanced linkage training set."""

import numpy as np

from microlink.classifiers import MODEL_KINDS, ModelConfig, evaluate, fit, resample
from microlink.encoding import LabeledExample

rng = np.random.default_rng(4)


def draw(n, label_rate=0.12):
    # positives sit in a shifted cluster, with one junk dimension
    y = (rng.random(n) < label_rate).astype(int)
    X = rng.normal(0.0, 1.0, (n, 3))
    X[:, 0] += 2.2 * y
    X[:, 1] -= 1.4 * y
    return [LabeledExample(X[i], int(y[i]), 1.0, f"r{i}") for i in range(n)]


train = draw(800)
test = draw(400)
n_pos = sum(ex.label for ex in train)
print(f"training set: {len(train)} rows, {n_pos} positive")
balanced = resample(train, "both", 0.5, seed=0)
n_pos = sum(ex.label for ex in balanced)
print(f"after resampling: {len(balanced)} rows, {n_pos} positive")
print()

print(f"{'model':<15}{'accuracy':>9}{'precision':>10}{'recall':>8}{'F1':>8}")
for kind in MODEL_KINDS:
    config = ModelConfig(kind) if kind != "glm" else ModelConfig(
        kind, lambda_=1e-3
    )
    model = fit(config, balanced, seed=1)
    m = evaluate(model, test)
    print(f"{kind:<15}{m.accuracy:>9.3f}{m.precision:>10.3f}"
          f"{m.recall:>8.3f}{m.f1:>8.3f}")
