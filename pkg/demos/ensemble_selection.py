"""Grid-search every ensemble method, then pick a winner.

The three methods see the same train/validation split; each gets a small
hyperparameter grid and the best validation F1 takes the prize.
"""

import numpy as np

from microlink.encoding import LabeledExample
from microlink.ensemble import DEFAULT_GRIDS, select_best_method

rng = np.random.default_rng(11)


def draw(n):
    y = rng.integers(0, 2, size=n)
    X = rng.normal(0.0, 1.0, (n, 4))
    # two informative directions, individually weak
    X[:, 0] += 1.1 * y
    X[:, 1] += np.where(y == 1, rng.normal(0.8, 1.0, n), 0.0)
    return [LabeledExample(X[i], int(y[i]), 1.0, f"r{i}") for i in range(n)]


train = draw(500)
valid = draw(250)

spec, comparison = select_best_method(train, valid, DEFAULT_GRIDS, seed=2)

print(f"{'method':<12}{'accuracy':>9}{'precision':>10}{'recall':>8}{'F1':>8}")
for row in comparison:
    print(f"{row['model']:<12}{row['accuracy']:>9.3f}{row['precision']:>10.3f}"
          f"{row['recall']:>8.3f}{row['f1']:>8.3f}")

print()
print(f"selected: {spec.method}")
if spec.method == "stacking":
    print(f"  folds: {spec.n_folds}, meta: {spec.meta_config.kind}")
print("  bases:", ", ".join(c.kind for c in spec.base_configs))
