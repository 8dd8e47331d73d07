"""
Privacy-preserving search, basic scheme
=======================================

Two owners upload encrypted descriptors, a third user searches them. The
encrypted result is checked against the same search run on plaintext, and
the audit log is checked for what each party could have learned.
"""
import time

from picsearch import PlainPipeline, System, SystemConfig
from picsearch.protocol import ALL_PREDICATES, audit_assert
from picsearch.synth import clustered_images, noisy_copy

cfg = SystemConfig(k_nn=5, seed=0)
system, oracle = System(cfg), PlainPipeline(cfg)
system.tp_init()

owners = {"alice": '(or "friend" "family")', "bob": '"colleague"'}
corpora = {}
for j, (name, policy) in enumerate(owners.items()):
    system.register(name, policy)
    oracle.register(name, policy)
    corpora[name] = clustered_images(20, 15, 16, seed=j, prefix=name[0], centre_seed=0)
system.register("carol")

t = time.perf_counter()
for name, imgs in corpora.items():
    system.upload_basic(name, imgs)
    oracle.upload_basic(name, imgs)
print(f"uploaded 2 x 20 images in {time.perf_counter() - t:.1f} s")

query = noisy_copy(corpora["alice"][7], 2.0)
t = time.perf_counter()
res = system.search_basic("carol", query, ["friend", "colleague"])
print(f"search took {time.perf_counter() - t:.1f} s, {res.phi_count} encrypted distances")
for owner, image, votes in res.ranked[:5]:
    print(f"  {owner}/{image}  votes={votes}")
print("same as plaintext:", res.ranked == oracle.search_basic(query, ["friend", "colleague"]))

denied = system.search_basic("carol", query, ["stranger"])
print("stranger sees", len(denied.ranked), "results from", denied.permitted_owners, "owners")

for name, pred in ALL_PREDICATES.items():
    print(f"audit {name}: {audit_assert(system.log, pred)}")
