import random

import numpy as np
import pytest

from picsearch import he
from picsearch.encvec import (PlainVector, check_overflow, convert_vector, decrypt_scaled,
                              decrypt_score, decrypt_vector, deserialize_vector, encrypt_vector,
                              phi_distance, phi_dot, serialize_vector, vector_payload)
from picsearch.errors import ConfigError, DimensionMismatch
from picsearch.fixedpoint import DEFAULT_FXP, encode_array

F = DEFAULT_FXP.frac_bits


def pv(values):
    return PlainVector.from_raw(encode_array(values))


def fixed_sqdist(x, y):
    # plaintext oracle on the fixed-point integers
    return sum((int(a) - int(b)) ** 2 for a, b in zip(encode_array(x), encode_array(y)))


@pytest.fixture(scope="module")
def key64(params64):
    return he.gen_key(params64, random.Random(3))


def test_round_trip_and_zero(key64, rng):
    v = pv([1.5, -2.0, 300.25])
    assert decrypt_vector(encrypt_vector(v, key64, rng), key64) == v
    z = encrypt_vector(pv([0, 0, 0]), key64, rng)
    assert all(he.decrypt(c, key64) == 0 for c in z.cts)


def test_distance_examples(key64, rng):
    x = encrypt_vector(pv([1, 2]), key64, rng)
    y = encrypt_vector(pv([4, 6]), key64, rng)
    assert decrypt_score(phi_distance(x, y), key64) == 25.0
    assert decrypt_scaled(phi_distance(x, x), key64) == 0
    assert decrypt_scaled(phi_distance(x, y), key64) == 25 << (2 * F)


def test_dot_examples(key64, rng):
    x = encrypt_vector(pv([1, 0, 2]), key64, rng)
    y = encrypt_vector(pv([3, 5, 4]), key64, rng)
    z = encrypt_vector(pv([0, 0, 0]), key64, rng)
    assert decrypt_score(phi_dot(x, y), key64) == 11.0
    assert decrypt_score(phi_dot(x, z), key64) == 0.0
    assert decrypt_scaled(phi_dot(x, y), key64) == decrypt_scaled(phi_dot(y, x), key64)
    neg = encrypt_vector(pv([-1.5, 2]), key64, rng)
    pos = encrypt_vector(pv([4, 1]), key64, rng)
    assert decrypt_score(phi_dot(neg, pos), key64) == -4.0


def test_dimension_mismatch(key64, rng):
    x = encrypt_vector(pv([1, 2]), key64, rng)
    y = encrypt_vector(pv([1, 2, 3]), key64, rng)
    with pytest.raises(DimensionMismatch):
        phi_distance(x, y)
    with pytest.raises(DimensionMismatch):
        phi_dot(x, y)


def test_random_pairs_exact_and_bounded(key64, rng):
    gen = np.random.default_rng(0)
    for dim in (2, 16, 64):
        for _ in range(5):
            x, y = gen.uniform(-50, 255, dim), gen.uniform(-50, 255, dim)
            c = phi_distance(encrypt_vector(pv(x), key64, rng), encrypt_vector(pv(y), key64, rng))
            assert decrypt_scaled(c, key64) == fixed_sqdist(x, y)
            real = float(np.sum((x - y) ** 2))
            bound = dim * (2.0 ** (-F + 1) * np.abs(x - y).max() + 2.0 ** (-2 * F))
            assert abs(decrypt_score(c, key64) - real) <= bound


def test_unit_vectors_relative_accuracy(key64, rng):
    gen = np.random.default_rng(1)
    for _ in range(5):
        x, y = gen.normal(size=32), gen.normal(size=32)
        x, y = x / np.linalg.norm(x), y / np.linalg.norm(y)
        c = phi_distance(encrypt_vector(pv(x), key64, rng), encrypt_vector(pv(y), key64, rng))
        real = float(np.sum((x - y) ** 2))
        assert abs(decrypt_score(c, key64) - real) <= 1e-3 * real


def test_ranking_preserved(key64, rng):
    gen = np.random.default_rng(2)
    q = gen.uniform(0, 100, 8)
    ys = gen.uniform(0, 100, (10, 8))
    eq = encrypt_vector(pv(q), key64, rng)
    got = [decrypt_scaled(phi_distance(eq, encrypt_vector(pv(y), key64, rng)), key64) for y in ys]
    want = [fixed_sqdist(q, y) for y in ys]
    assert got == want
    assert np.argsort(got, kind="stable").tolist() == np.argsort(want, kind="stable").tolist()


def test_key_stages(params64, rng):
    k = he.gen_key(params64, rng)
    k_u, k_u1, k_u2 = he.split_key(k, 3, rng)
    k_ka, k_cs = he.split_key(k, 2, rng)
    x = encrypt_vector(pv([1, 2, 3]), k_u, rng, tag=("k_u",))
    y = encrypt_vector(pv([2, 2, 5]), k_u, rng, tag=("k_u",))
    chain = lambda v: convert_vector(v, [k_u1, k_u2], "append", ["k_u'", "k_u''"])
    cx, cy = chain(x), chain(y)
    assert cx.key_tag == ("k_u", "k_u'", "k_u''")
    assert decrypt_score(phi_distance(cx, cy), k) == 5.0
    sx = convert_vector(cx, k_cs, "strip", "k_CS")
    sy = convert_vector(cy, k_cs, "strip", "k_CS")
    assert sx.key_tag[-1] == "~k_CS"
    phi = phi_distance(sx, sy)
    assert decrypt_score(phi, k_ka) == 5.0
    # under a split factor the value fails the oracle
    assert decrypt_score(phi, k_cs) != 5.0 or decrypt_score(phi, k) != 5.0
    assert decrypt_score(phi_distance(cx, cy), k_ka) != 5.0
    # append then strip is the identity, empty list leaves the vector alone
    assert convert_vector(convert_vector(x, k_cs, "append"), k_cs, "strip") == x
    assert convert_vector(x, [], "append") == x


def test_payload_size_and_serialization(params128, rng):
    k = he.gen_key(params128, rng)
    v = pv(np.random.default_rng(3).uniform(0, 255, 128))
    x = encrypt_vector(v, k, rng)
    assert len(vector_payload(x)) == 65536
    data = serialize_vector(x)
    assert data[:4] == b"PICV"
    back = deserialize_vector(data, params128)
    assert back.cts == x.cts


def test_overflow_guard(params128):
    check_overflow(1000, DEFAULT_FXP, params128)
    small = he.gen_params(32, 2, random.Random(0))
    with pytest.raises(ConfigError):
        check_overflow(128, DEFAULT_FXP, small)
