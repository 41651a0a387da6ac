# Without activations the co-embedding encoder is a sum of graph filters of orders 2..k.
import numpy as np

from dgae.graph import normalize_adjacency
from dgae.models import Variant
from dgae.spectral import expand_linear_model, random_linear_model, verify_expansion
from dgae.synthetic import erdos_renyi

rng = np.random.default_rng(0)
x = rng.normal(size=(20, 6))
adj = normalize_adjacency(erdos_renyi(20, 0.2, seed=1, features=x))

for variant in (Variant.GAE, Variant.DGAE_FEAT, Variant.DGAE, Variant.DGAE_ID):
    model = random_linear_model(5, 6, rng, variant=variant, random_biases=False)
    exp = expand_linear_model(model)
    rep = verify_expansion(model, adj, x)
    print(f"{variant.value:<9} orders {exp.orders}  max err {rep.max_abs_err:.1e}")

# weight of each order in the 5-layer co-embedding model
model = random_linear_model(5, 6, rng, random_biases=False)
for j, c in sorted(expand_linear_model(model).coeffs.items()):
    print(f"order {j}: ||C_j|| = {np.linalg.norm(c):.3f}")
