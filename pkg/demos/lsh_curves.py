"""Where each banding scheme starts to fire.

Prints the collision probability of the default schedule over a coarse
similarity grid, plus the similarity at which each scheme crosses 50%.
"""

import numpy as np

from microlink.lsh import AdaptiveSchedule, s_curve

schedule = AdaptiveSchedule.default()
grid = [0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 0.99, 1.0]

header = "S     " + "".join(f"({s.bands:2d},{s.rows:2d})  " for s in schedule)
print(header)
print("-" * len(header))
for s in grid:
    cells = "".join(f"{s_curve(s, scheme):7.4f}  " for scheme in schedule)
    print(f"{s:.2f}  {cells}")

print()
fine = np.linspace(0.0, 1.0, 100_001)
for scheme in schedule:
    probs = 1.0 - (1.0 - fine ** scheme.rows) ** scheme.bands
    mid = fine[int(np.searchsorted(probs, 0.5))]
    print(f"scheme ({scheme.bands:2d},{scheme.rows:2d}) crosses p=0.5 "
          f"near S = {mid:.3f}")

print()
print("The schedule probes top to bottom: a strict scheme only fires for")
print("near-duplicates, and each step down admits weaker matches.")
