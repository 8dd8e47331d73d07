"""
Cluster pruning
===============

Pick sqrt(N) random leaders, attach every vector to its nearest leader and
answer k-NN queries by scanning only the closest clusters. Probing more
clusters trades time for recall; probing all of them is exact.
"""
import numpy as np

from picsearch.cluster_index import VectorRef, brute_force_knn, build_index, search

gen = np.random.default_rng(4)
x = gen.normal(size=(2000, 8))
refs = [VectorRef("owner", f"img{i}", 0) for i in range(len(x))]
pos = {r: i for i, r in enumerate(refs)}

idx = build_index(x, refs, seed=0)
print("leaders:", idx.C)

queries = gen.normal(size=(50, 8))
for beta in (1, 2, 4, 8, idx.C):
    hits = 0
    for q in queries:
        truth = {i for i, _ in brute_force_knn(q, x, 5)}
        got = {pos[r] for r, _ in search(idx, q, lambda r: x[pos[r]], k=5, beta=beta)}
        hits += len(truth & got)
    print(f"beta={beta:3d}  recall@5={hits / (5 * len(queries)):.3f}")
