# Symmetric normalization with self-loops on a 3-node path, then a random graph.
import numpy as np

from dgae.graph import lazy_walk_matrix, normalize_adjacency
from dgae.synthetic import erdos_renyi, path_graph

np.set_printoptions(precision=4, suppress=True)

# path 0 - 1 - 2; with self-loops the degrees are 2, 3, 2
p3 = path_graph(3)
adj = normalize_adjacency(p3)
print(adj.toarray())
print("1/sqrt(6) =", 1 / np.sqrt(6))

# the lazy walk shares the sparsity pattern but rows sum to one
print(lazy_walk_matrix(p3).toarray())

# spectrum of the normalized adjacency lies in [-1, 1], top eigenvalue 1 per component
g = erdos_renyi(40, 0.1, seed=0)
eig = np.linalg.eigvalsh(normalize_adjacency(g).toarray())
print("components:", len(np.unique(g.components())))
print("largest eigenvalues:", eig[-3:])
print("smallest eigenvalue:", eig[0])
