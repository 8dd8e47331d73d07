"""
Privacy-preserving search, advanced scheme
==========================================

Each image is summarized by one tf-idf vector over the owner's vocabulary.
The querier receives the owner's vocabulary through a policy-gated envelope,
weights its own query and the cloud returns every image under a distance
threshold.
"""
from picsearch import PlainPipeline, System, SystemConfig
from picsearch.synth import clustered_images, noisy_copy

cfg = SystemConfig(scheme="advanced", v=30, k_nn=5, seed=1)
system, oracle = System(cfg), PlainPipeline(cfg)
system.tp_init()
system.register("alice", '"friend"')
oracle.register("alice", '"friend"')
system.register("dave")

images = clustered_images(60, 30, 16, n_centres=15, seed=2)
system.upload_advanced("alice", images)
oracle.upload_advanced("alice", images)

query = noisy_copy(images[11], 1.0)
res = system.search_advanced("dave", query, ["friend"])
print("threshold matches (scaled distance):")
for owner, image, dist in res.ranked:
    print(f"  {owner}/{image}  {dist}")
print("same as plaintext:", res.ranked == oracle.search_advanced(query, ["friend"]))
