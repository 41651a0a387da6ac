# Why deep plain encoders forget the graph: powers of the lazy walk matrix lose their rows' identity.
import math

import numpy as np

from dgae.evaluation import split_edges
from dgae.models import ModelConfig, build, decode, encode
from dgae.graph import normalize_adjacency
from dgae.spectral import walk_collapse
from dgae.synthetic import path_graph, planted_partition, star_graph
from dgae.training import TrainConfig, train

for name, g in [("path P3", path_graph(3)), ("star S5", star_graph(5))]:
    disp = dict(walk_collapse(g, 50))
    print(name, {k: f"{disp[k]:.1e}" for k in (1, 2, 5, 10, 50)})

# a 36-layer plain encoder: outputs shrink until every probability is 1/2
g = planted_partition(n=200, seed=1)
split = split_edges(g, seed=0)
model = build(ModelConfig(variant="GAE", k=36), g.m, g.n, np.random.default_rng(0))
model, history = train(model, g, split, train_cfg=TrainConfig(epochs=50))
z = encode(model, normalize_adjacency(g.with_edges(split.train_edges)), g.features).embedding
print("loss - log 2:", history.losses()[-1] - math.log(2))
print("max |A_hat - 1/2|:", np.abs(decode(z) - 0.5).max())
