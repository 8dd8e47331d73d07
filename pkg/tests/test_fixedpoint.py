from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from picsearch.errors import RangeError
from picsearch.fixedpoint import (DEFAULT_FXP, FxpConfig, FxpValue, decode, decode_array, encode,
                                  encode_array, fxp_add, fxp_mul, fxp_sub, lift, lower)

SMALL = FxpConfig(word_bits=16, int_bits=8)


def test_config_invariants():
    assert DEFAULT_FXP.frac_bits == 16
    assert SMALL.resolution == 2.0 ** -8
    assert SMALL.bound == 128.0
    for bad in [(8, 8), (8, 0), (70, 10)]:
        with pytest.raises(ValueError):
            FxpConfig(*bad)


def test_encode_examples():
    assert encode(0.0).raw == 0
    assert encode(1.5, SMALL).raw == 384
    with pytest.raises(RangeError):
        encode(2.0 ** (SMALL.int_bits - 1), SMALL)
    with pytest.raises(RangeError):
        encode(-128.0, SMALL)


def test_decode_examples():
    assert decode(FxpValue(-256, SMALL)) == -1.0
    assert decode(FxpValue(1, SMALL)) == 2.0 ** -8


@given(st.floats(min_value=-127.99, max_value=127.99, allow_nan=False))
def test_round_trip_within_half_resolution(a):
    assert abs(decode(encode(a, SMALL)) - a) <= SMALL.resolution / 2


def test_add_sub_mul_examples():
    assert decode(fxp_add(encode(1.25), encode(0.75))) == 2.0
    x = encode(3.3)
    assert fxp_sub(x, x).raw == 0
    assert decode(fxp_mul(encode(2.0), encode(3.0))) == 6.0
    assert decode(fxp_mul(encode(0.5), encode(0.5))) == 0.25
    assert fxp_mul(x, encode(1.0)) == x
    big = FxpValue(SMALL.raw_bound - 1, SMALL)
    with pytest.raises(RangeError):
        fxp_add(big, FxpValue(1, SMALL))


@given(st.integers(-2**20, 2**20), st.integers(-2**20, 2**20))
def test_mul_truncates_toward_zero(a, b):
    got = fxp_mul(FxpValue(a), FxpValue(b)).raw
    exact = Fraction(a * b, DEFAULT_FXP.scale)
    assert abs(got) == abs(exact.numerator) // exact.denominator
    assert got == 0 or (got > 0) == (exact > 0)


def test_lift_lower():
    n = 1009 * 1013
    assert lower(lift(FxpValue(-5), n), n) == -5
    assert lift(0, n) == 0
    assert lower(n - 1, n) == -1
    with pytest.raises(RangeError):
        lift(n // 2 + 1, n)


@given(st.integers(-2**60, 2**60))
def test_lift_lower_round_trip(raw):
    n = (1 << 127) - 1
    assert lower(lift(raw, n), n) == raw


def test_homomorphic_consistency(params64, rng):
    from picsearch import he
    k = he.gen_key(params64, rng)
    n = params64.n
    for _ in range(20):
        a, b = encode(rng.uniform(-1000, 1000)), encode(rng.uniform(-1000, 1000))
        ca, cb = he.encrypt(lift(a, n), k, rng), he.encrypt(lift(b, n), k, rng)
        assert he.decrypt(ca + cb, k) == lift(fxp_add(a, b), n)
        # products stay at scale 2^(2F): compare before rescaling
        assert lower(he.decrypt(ca * cb, k), n) == a.raw * b.raw


def test_array_helpers():
    vals = np.array([0.0, 1.5, -2.25, 100.0])
    raws = encode_array(vals, SMALL)
    assert raws.tolist() == [encode(v, SMALL).raw for v in vals]
    assert np.array_equal(decode_array(raws, SMALL), vals)
    with pytest.raises(RangeError):
        encode_array([200.0], SMALL)
