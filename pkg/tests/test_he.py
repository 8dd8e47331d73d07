import random
from functools import reduce
from math import gcd

import pytest
import sympy
from hypothesis import given, settings, strategies as st

from picsearch import he, modmat
from picsearch.errors import MalformedFileError


def det_oracle(mat, n):
    # independent determinant: sympy over the integers, reduced mod n
    return int(sympy.Matrix(mat).det()) % n


def test_gen_params_bit_lengths():
    p128 = he.gen_params(128, 2, random.Random(5))
    assert 255 <= p128.n.bit_length() <= 256
    p32 = he.gen_params(32, 1, random.Random(5))
    assert 63 <= p32.n.bit_length() <= 64
    assert p128.d == 4 and p32.d == 2


def test_modulus_is_composite_with_two_large_factors():
    p = he.gen_params(40, 2, random.Random(9))
    assert not sympy.isprime(p.n)
    factors = sympy.factorint(p.n)
    assert sorted(factors.values()) == [1, 1]
    assert all(f.bit_length() == 40 for f in factors)


def test_small_lambda_rejected():
    with pytest.raises(ValueError):
        he.gen_params(16)


def test_key_is_invertible(params64, rng):
    k = he.gen_key(params64, rng)
    n = params64.n
    assert gcd(det_oracle(k.mat, n), n) == 1
    assert modmat.matmul(k.mat, k.inv, n) == modmat.identity(params64.d)


def test_modmat_inverse_matches_sympy(params64, rng):
    n = params64.n
    m = modmat.random_matrix(4, n, rng)
    inv = modmat.inverse(m, n)
    expected = sympy.Matrix(m).inv_mod(n)
    assert inv == tuple(tuple(int(x) for x in expected.row(i)) for i in range(4))
    assert modmat.det(m, n) == det_oracle(m, n)


def test_singular_matrix_has_no_inverse():
    assert modmat.inverse(((1, 2), (2, 4)), 101) is None


def test_examples(params128, rng):
    k = he.gen_key(params128, rng)
    n = params128.n
    E = lambda m: he.encrypt(m, k, rng)
    assert he.decrypt(he.he_add(E(3), E(4)), k) == 7
    assert he.decrypt(he.he_sub(E(11), E(11)), k) == 0
    assert he.decrypt(he.he_add(E(n - 1), E(1)), k) == 0
    assert he.decrypt(he.he_mul(E(3), E(4)), k) == 12
    assert he.decrypt(E(2) * E(3) * E(5), k) == 30
    assert he.decrypt(he.he_mul(E(987654321), E(1)), k) == 987654321


def test_encryption_is_randomized(params64, rng):
    k = he.gen_key(params64, rng)
    a, b = he.encrypt(5, k, rng), he.encrypt(5, k, rng)
    assert a.mat != b.mat
    assert he.decrypt(a, k) == he.decrypt(b, k) == 5


def test_wrong_key_fails(params64, rng):
    k, other = he.gen_key(params64, rng), he.gen_key(params64, rng)
    msgs = [rng.randrange(params64.n) for _ in range(20)]
    assert any(he.decrypt(he.encrypt(m, k, rng), other) != m for m in msgs)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0), st.integers(min_value=0), st.integers(0, 2**32))
def test_homomorphism_property(params64, a, b, seed):
    r = random.Random(seed)
    n = params64.n
    a, b = a % n, b % n
    k = he.gen_key(params64, r)
    ca, cb = he.encrypt(a, k, r), he.encrypt(b, k, r)
    assert he.decrypt(ca, k) == a
    assert he.decrypt(ca + cb, k) == (a + b) % n
    assert he.decrypt(ca - cb, k) == (a - b) % n
    assert he.decrypt(ca * cb, k) == (a * b) % n


def test_random_polynomial(params64, rng):
    n = params64.n
    k = he.gen_key(params64, rng)
    xs = [rng.randrange(n) for _ in range(4)]
    cs = [he.encrypt(x, k, rng) for x in xs]
    # 3*x0^2*x1 + x2*x3^3 - 7
    plain = (3 * xs[0] ** 2 * xs[1] + xs[2] * xs[3] ** 3 - 7) % n
    three, seven = he.encrypt(3, k, rng), he.encrypt(7, k, rng)
    enc = three * cs[0] * cs[0] * cs[1] + cs[2] * cs[3] * cs[3] * cs[3] - seven
    assert he.decrypt(enc, k) == plain


def test_split_and_chain(params128, rng):
    k = he.gen_key(params128, rng)
    k1, k2, k3 = he.split_key(k, 3, rng)
    assert (k1 @ k2 @ k3).mat == k.mat
    assert he.product([k1, k2, k3]).mat == k.mat
    c = he.encrypt(424242, k1, rng)
    c = he.convert_append(he.convert_append(c, k2), k3)
    assert he.decrypt(c, k) == 424242


def test_convert_examples(params64, rng):
    k, f = he.gen_key(params64, rng), he.gen_key(params64, rng)
    eye = he.identity_key(params64)
    c = he.encrypt(99, k, rng)
    assert he.convert_append(c, eye) == c
    assert he.convert_strip(c, eye) == c
    assert he.convert_strip(he.convert_append(c, f), f) == c
    assert he.decrypt(he.convert_append(c, f), k @ f) == 99
    under_identity = he.encrypt(17, eye, rng)
    assert he.decrypt(he.convert_append(under_identity, f), f) == 17


def test_strip_cloud_share(params64, rng):
    k = he.gen_key(params64, rng)
    k_ka, k_cs = he.split_key(k, 2, rng)
    c = he.encrypt(31337, k, rng)
    assert he.decrypt(he.convert_strip(c, k_cs), k_ka) == 31337


def test_ciphertext_serialization(params128, rng):
    k = he.gen_key(params128, rng)
    c = he.encrypt(123, k, rng)
    assert len(he.ciphertext_payload(c)) == 16 * 32
    data = he.serialize_ciphertext(c)
    assert data[:4] == b"PICC"
    assert len(data) == he.HEADER_SIZE + 512
    back = he.deserialize_ciphertext(data, params128)
    assert back == c and he.serialize_ciphertext(back) == data
    with pytest.raises(MalformedFileError):
        he.deserialize_ciphertext(data[:-1], params128)
    with pytest.raises(MalformedFileError):
        he.deserialize_ciphertext(b"XXXX" + data[4:], params128)


def test_key_serialization(params64, rng):
    k = he.gen_key(params64, rng)
    data = he.serialize_key(k)
    assert data[:4] == b"PICK"
    back = he.deserialize_key(data, params64)
    assert back.mat == k.mat and back.inv == k.inv
