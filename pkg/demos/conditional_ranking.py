"""Ranking surviving candidates by conditional probability.

Trains scoring tables on resolved events, then ranks the candidates of
a new event by how well their features explain its damage amount.
"""

from microlink.data import FeatureSpec, Record, TabularDataset
from microlink.ranking import fit_cond_prob, rank_candidates, score

# resolved events: damage bracket against the linked record's features
schema = (
    FeatureSpec("open_id", "identifier", "id"),
    FeatureSpec("structure", "categorical", "common"),
    FeatureSpec("floors", "continuous", "common"),
    FeatureSpec("damage", "continuous", "open_only"),
)
rows = []
for i in range(60):
    # taller reinforced buildings produce the expensive events
    heavy = i % 3 == 0
    rows.append(Record(f"E{i}", {
        "open_id": f"E{i}",
        "structure": "reinforced" if heavy else "timber",
        "floors": 12.0 + (i % 7) if heavy else 2.0 + (i % 4),
        "damage": 40_000.0 + 900 * i if heavy else 3_000.0 + 150 * i,
    }))
train = TabularDataset(schema, rows)

model = fit_cond_prob(train, "damage", ["structure", "floors"], y_bins=2)

candidates = [
    Record("S-0410", {"id": "S-0410", "structure": "timber", "floors": 3.0}),
    Record("S-1177", {"id": "S-1177", "structure": "reinforced",
                      "floors": 14.0}),
    Record("S-0032", {"id": "S-0032", "structure": "reinforced",
                      "floors": 4.0}),
]

for damage in (5_000.0, 70_000.0):
    print(f"event with damage {damage:,.0f}:")
    for rc in rank_candidates(model, damage, candidates, n=3):
        print(f"  rank {rc.rank}: {rc.support_id}  "
              f"log score {rc.log_score:+.3f}  "
              f"posterior share {rc.normalized_score:.3f}")
    print()

partial = Record("S-9999", {"id": "S-9999", "structure": "reinforced"})
print("a candidate missing its floor count still gets a comparable score:")
print(f"  {score(model, 70_000.0, partial):+.3f}")
