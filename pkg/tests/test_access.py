import itertools
import random
import time
from dataclasses import replace

import pytest

from picsearch.access import (Gate, Leaf, canonical, evaluate, hash_attribute, hash_attributes,
                              leaves, open_envelope, parse_policy, seal_envelope, serialize_tree)
from picsearch.errors import AuthenticationError, AuthorizationError, PolicySyntaxError

# published SHA-256 test vector for "abc"
ABC_DIGEST = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def test_hashing():
    assert hash_attributes([]) == frozenset()
    assert hash_attribute("abc").hex() == ABC_DIGEST
    assert hash_attribute("Student") == hash_attribute(" student ")
    assert canonical("Café") == canonical("café")


def test_small_gates():
    a, b = hash_attribute("a"), hash_attribute("b")
    assert evaluate(Gate(1, (Leaf(a),)), {a})
    assert not evaluate(Gate(2, (Leaf(a), Leaf(b))), {a})
    assert evaluate(Gate(2, (Leaf(a), Leaf(b))), {a, b})
    with pytest.raises(PolicySyntaxError):
        Gate(3, (Leaf(a), Leaf(b)))
    with pytest.raises(PolicySyntaxError):
        Gate(1, ())


def test_parse_policy():
    t = parse_policy('(or "friend" (and Colleague "senior staff") (thresh 2 a b c))')
    assert len(leaves(t)) == 6
    H = hash_attributes
    assert evaluate(t, H(["FRIEND"]))
    assert evaluate(t, H(["colleague", "Senior Staff"]))
    assert not evaluate(t, H(["colleague"]))
    assert evaluate(t, H(["a", "c"]))
    assert not evaluate(t, H(["a"]))
    assert parse_policy('"x"') == Leaf(hash_attribute("x"))
    for bad in ["", "(or", "(xor a b)", "(thresh a b)", "(thresh 3 a b)", "a b", ")", "and"]:
        with pytest.raises(PolicySyntaxError):
            parse_policy(bad)


def random_tree(rng, names, depth=0):
    if depth >= 2 or len(names) == 1 or rng.random() < 0.3:
        if len(names) == 1:
            return Leaf(hash_attribute(names[0]))
    k = rng.randint(2, min(4, len(names)))
    cuts = sorted(rng.sample(range(1, len(names)), k - 1))
    parts = [names[i:j] for i, j in zip([0] + cuts, cuts + [len(names)])]
    children = tuple(random_tree(rng, p, depth + 1) for p in parts)
    return Gate(rng.randint(1, len(children)), children)


def brute(tree, present):
    # independent evaluator: count satisfied children without short-circuit
    if isinstance(tree, Leaf):
        return tree.digest in present
    return sum(brute(c, present) for c in tree.children) >= tree.threshold


def test_truth_tables():
    rng = random.Random(0)
    for _ in range(40):
        names = [f"attr{i}" for i in range(rng.randint(1, 8))]
        tree = random_tree(rng, names)
        digests = [hash_attribute(n) for n in names]
        for mask in range(2 ** len(names)):
            present = {d for i, d in enumerate(digests) if mask >> i & 1}
            assert evaluate(tree, present) == brute(tree, present)


def test_envelope():
    tree = parse_policy('(and "a" "b")')
    env = seal_envelope(b"secret payload", tree)
    assert open_envelope(env, hash_attributes(["a", "b"])) == b"secret payload"
    with pytest.raises(AuthorizationError):
        open_envelope(env, hash_attributes(["a"]))
    flipped = bytearray(env.ciphertext)
    flipped[3] ^= 1
    with pytest.raises(AuthenticationError):
        open_envelope(replace(env, ciphertext=bytes(flipped)), hash_attributes(["a", "b"]))
    # swapping the policy for a weaker one breaks authentication too
    weaker = parse_policy('(or "a" "b")')
    with pytest.raises(AuthenticationError):
        open_envelope(replace(env, policy=weaker), hash_attributes(["a"]))


def test_serialize_tree_distinguishes_thresholds():
    a, b = Leaf(hash_attribute("a")), Leaf(hash_attribute("b"))
    assert serialize_tree(Gate(1, (a, b))) != serialize_tree(Gate(2, (a, b)))


def test_six_leaf_speed():
    tree = parse_policy('(or (and a b) (and c d) (thresh 2 e f a))')
    attrs = hash_attributes(["c", "e", "x"])
    reps = 2000
    t = time.perf_counter()
    for _ in range(reps):
        evaluate(tree, attrs)
    assert (time.perf_counter() - t) / reps < 1e-3
