"""
Map/reduce distance search
==========================

Mappers compute encrypted distances in parallel, reducers decrypt and keep
what falls under a threshold, and the threshold is widened by binary search
until enough candidates pass.
"""
import random
import time

import numpy as np

from picsearch import he
from picsearch.cluster_index import VectorRef, brute_force_knn
from picsearch.encvec import PlainVector, encrypt_vector
from picsearch.fixedpoint import encode_array
from picsearch.parallel import decrypt_records, k_smallest, map_distances, threshold_select

rng = random.Random(5)
params = he.gen_params(128, 2, rng)
k = he.gen_key(params, rng)
gen = np.random.default_rng(5)
x = encode_array(gen.uniform(0, 255, (200, 16)))
q = encode_array(gen.uniform(0, 255, 16))
cands = [(VectorRef("o", str(i), 0), encrypt_vector(PlainVector.from_raw(v), k, rng)) for i, v in enumerate(x)]
eq = encrypt_vector(PlainVector.from_raw(q), k, rng)

for workers in (1, 2, 8):
    t = time.perf_counter()
    recs = map_distances(eq, cands, workers=workers)
    print(f"workers={workers}: {time.perf_counter() - t:.2f} s")

kept, state = threshold_select(decrypt_records(recs, k), 10)
print(f"threshold settled after {state.steps} steps with {len(kept)} candidates")
top = sorted(int(r.ref.image_id) for r in k_smallest(kept, 10))
print("matches exact 10-NN:", top == sorted(i for i, _ in brute_force_knn(q, x, 10)))
