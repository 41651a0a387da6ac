# Plain stacking hurts, co-embedding skips do not.
# Community graph with topic-like features stands in for a citation network.
import time

import numpy as np

from dgae.evaluation import evaluate, split_edges
from dgae.graph import normalize_adjacency
from dgae.models import ModelConfig, Variant, build, encode
from dgae.synthetic import planted_partition
from dgae.training import TrainConfig, train

g = planted_partition(n=300, p_in=0.08, seed=0)
split = split_edges(g, seed=0)
adj = normalize_adjacency(g.with_edges(split.train_edges))
print(g.n, "nodes,", g.num_edges, "edges,", g.m, "features")

for variant, k in [("GAE", 2), ("GAE", 8), ("GAE", 16), ("DGAE", 8), ("DGAE", 16), ("DGAE_ID", 8)]:
    start = time.perf_counter()
    model = build(ModelConfig(variant=variant, k=k), g.m, g.n, np.random.default_rng(0))
    model, history = train(model, g, split, train_cfg=TrainConfig(epochs=150))
    test_auc, test_ap = evaluate(encode(model, adj, g.features).embedding, split)
    print(f"{k:>2}-{variant:<8} AUC {test_auc:.3f}  AP {test_ap:.3f}  "
          f"loss {history.losses()[-1]:.3f}  {time.perf_counter() - start:.1f}s")

# learned mixing weights of the last deep model
print("alpha", np.round(model.alphas(), 3))
print("beta ", np.round(model.betas(), 3))

# variational counterpart
model = build(ModelConfig(variant=Variant.DVGA_ID, k=6), g.m, g.n, np.random.default_rng(0))
model, _ = train(model, g, split, train_cfg=TrainConfig(epochs=150))
print("6-DVGA_ID AUC %.3f AP %.3f" % evaluate(encode(model, adj, g.features).embedding, split))
