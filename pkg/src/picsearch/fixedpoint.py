"""Signed fixed-point numbers and their embedding into Z_n.

A real ``a`` is stored as the integer ``round(a * 2**frac_bits)``. Products
are rescaled by ``2**frac_bits``; inside ciphertexts nothing is rescaled, so
homomorphic products carry scale ``2**(2*frac_bits)`` until decryption.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RangeError


@dataclass(frozen=True)
class FxpConfig:
    word_bits: int = 40
    int_bits: int = 24

    def __post_init__(self):
        if not 0 < self.int_bits < self.word_bits <= 62:
            raise ValueError("need 0 < int_bits < word_bits <= 62")

    @property
    def frac_bits(self) -> int:
        return self.word_bits - self.int_bits

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def resolution(self) -> float:
        return 2.0 ** -self.frac_bits

    @property
    def bound(self) -> float:
        """Exclusive magnitude bound of representable reals."""
        return float(1 << (self.int_bits - 1))

    @property
    def raw_bound(self) -> int:
        return 1 << (self.word_bits - 1)


DEFAULT_FXP = FxpConfig()


@dataclass(frozen=True)
class FxpValue:
    raw: int
    cfg: FxpConfig = DEFAULT_FXP

    def __float__(self) -> float:
        return decode(self)


def _check_raw(raw: int, cfg: FxpConfig) -> int:
    if abs(raw) >= cfg.raw_bound:
        raise RangeError(f"fixed-point overflow: |{raw}| >= 2^{cfg.word_bits - 1}")
    return raw


def encode(a: float, cfg: FxpConfig = DEFAULT_FXP) -> FxpValue:
    if not abs(a) < cfg.bound:
        raise RangeError(f"{a} outside (-{cfg.bound}, {cfg.bound})")
    return FxpValue(_check_raw(round(a * cfg.scale), cfg), cfg)


def decode(v: FxpValue) -> float:
    return v.raw / v.cfg.scale


def fxp_add(a: FxpValue, b: FxpValue) -> FxpValue:
    return FxpValue(_check_raw(a.raw + b.raw, a.cfg), a.cfg)


def fxp_sub(a: FxpValue, b: FxpValue) -> FxpValue:
    return FxpValue(_check_raw(a.raw - b.raw, a.cfg), a.cfg)


def fxp_mul(a: FxpValue, b: FxpValue) -> FxpValue:
    prod = a.raw * b.raw
    # integer quotient truncates toward zero
    q = abs(prod) >> a.cfg.frac_bits
    return FxpValue(_check_raw(q if prod >= 0 else -q, a.cfg), a.cfg)


def lift(v: FxpValue | int, n: int) -> int:
    raw = v.raw if isinstance(v, FxpValue) else int(v)
    if 2 * abs(raw) >= n:
        raise RangeError("value does not fit in the centered range of Z_n")
    return raw % n


def lower(r: int, n: int) -> int:
    r %= n
    return r - n if 2 * r > n else r


def encode_array(values, cfg: FxpConfig = DEFAULT_FXP) -> np.ndarray:
    """Vectorized :func:`encode` returning int64 raws."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size and not np.all(np.abs(arr) < cfg.bound):
        raise RangeError("array has values outside the representable range")
    return np.rint(arr * cfg.scale).astype(np.int64)


def decode_array(raws, cfg: FxpConfig = DEFAULT_FXP) -> np.ndarray:
    return np.asarray(raws, dtype=np.float64) / cfg.scale
