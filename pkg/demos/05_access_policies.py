"""
Attribute policies
==================

Owners protect their search parameters with a threshold-gate policy over
hashed attributes; the envelope only opens for a satisfying attribute set.
"""
from picsearch.access import evaluate, hash_attributes, open_envelope, parse_policy, seal_envelope
from picsearch.errors import AuthorizationError

policy = parse_policy('(or (and "Friend" "Photographer") (thresh 2 "family" "neighbour" "club"))')

for attrs in (["friend"], ["friend", "photographer"], ["family", "club"], ["club"]):
    print(f"{attrs!s:30} ->", evaluate(policy, hash_attributes(attrs)))

env = seal_envelope(b"dictionary and idf terms", policy)
print("opened:", open_envelope(env, hash_attributes(["Family", " neighbour "])))
try:
    open_envelope(env, hash_attributes(["stranger"]))
except AuthorizationError as exc:
    print("refused:", exc)
