# Hold out 5% / 10% of edges, sample as many non-edges, score with AUC and AP.
import numpy as np

from dgae.evaluation import aggregate, ap, auc, split_edges
from dgae.synthetic import erdos_renyi

g = erdos_renyi(60, 0.1, seed=4)
split = split_edges(g, seed=0)
print("edges", g.num_edges)
print("train", len(split.train_edges), "val", len(split.val_pos), "test", len(split.test_pos))
print("first test negatives", split.test_neg[:3].tolist())

# positives at ranks 1 and 3 of three scores
scores, labels = [0.9, 0.8, 0.1], [1, 0, 1]
print("auc", auc(scores, labels), "ap", ap(scores, labels))

# random scores hover around 0.5
rng = np.random.default_rng(0)
runs = []
for seed in range(5):
    s = rng.random(200)
    y = rng.integers(0, 2, 200)
    runs.append((auc(s, y), ap(s, y)))
agg = aggregate(runs)
print(f"random scoring: AUC {agg.auc_mean:.3f} ± {agg.auc_std:.3f}")
