"""Multi-level homomorphic encryption over d x d matrices mod n.

A message m is embedded at entry (0, 0) of a random upper-triangular matrix U
and hidden by conjugation with the key: ``C = K^-1 U K (mod n)``. Upper
triangular matrices are closed under + and *, and the (0, 0) entry of a sum
or product is the sum or product of the (0, 0) entries, which gives the
additive and multiplicative homomorphism for free. Changing the key is a
further conjugation, so ciphertexts can be re-keyed without decryption.

Keys do not commute. ``convert_append(c, f)`` moves a ciphertext from key K
to key K*f, ``convert_strip(c, f)`` moves it from K*f back to K.
"""
from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field
from typing import Sequence

import sympy

from . import modmat
from .errors import MalformedFileError, PicError
from .modmat import Matrix

_SYSRAND = random.SystemRandom()

KEY_MAGIC = b"PICK"
CT_MAGIC = b"PICC"
FORMAT_VERSION = 1
_HEADER = struct.Struct(">4sBHI")


@dataclass(frozen=True)
class HEParams:
    lambda_: int
    m_lvl: int
    n: int

    @property
    def d(self) -> int:
        return 2 * self.m_lvl

    @property
    def entry_bytes(self) -> int:
        # fixed width wide enough for any residue of a 2*lambda-bit modulus
        return max((2 * self.lambda_ + 7) // 8, (self.n.bit_length() + 7) // 8)


@dataclass(frozen=True)
class HEKey:
    mat: Matrix
    inv: Matrix
    params: HEParams = field(repr=False)

    def __repr__(self) -> str:
        return f"HEKey(d={self.params.d}, <secret>)"

    def __matmul__(self, other: "HEKey") -> "HEKey":
        n = self.params.n
        return HEKey(
            modmat.matmul(self.mat, other.mat, n),
            modmat.matmul(other.inv, self.inv, n),
            self.params,
        )


@dataclass(frozen=True)
class Ciphertext:
    mat: Matrix
    params: HEParams = field(repr=False, compare=False)

    def __add__(self, other: "Ciphertext") -> "Ciphertext":
        return he_add(self, other)

    def __sub__(self, other: "Ciphertext") -> "Ciphertext":
        return he_sub(self, other)

    def __mul__(self, other: "Ciphertext") -> "Ciphertext":
        return he_mul(self, other)


def _random_prime(bits: int, rng: random.Random) -> int:
    while True:
        cand = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if sympy.isprime(cand):
            return cand


def gen_params(lambda_: int = 128, m_lvl: int = 2, rng: random.Random | None = None) -> HEParams:
    """Pick a public modulus n = p*q of two distinct lambda-bit primes.

    The factors are dropped on return; nothing downstream needs them.
    """
    if lambda_ < 32:
        raise ValueError("lambda must be at least 32 bits")
    if m_lvl < 1:
        raise ValueError("m_lvl must be >= 1")
    rng = rng or _SYSRAND
    p = _random_prime(lambda_, rng)
    q = _random_prime(lambda_, rng)
    while q == p:
        q = _random_prime(lambda_, rng)
    return HEParams(lambda_=lambda_, m_lvl=m_lvl, n=p * q)


def _random_invertible(params: HEParams, rng: random.Random) -> tuple[Matrix, Matrix]:
    while True:
        mat = modmat.random_matrix(params.d, params.n, rng)
        inv = modmat.inverse(mat, params.n)
        if inv is not None:
            return mat, inv


def gen_key(params: HEParams, rng: random.Random | None = None) -> HEKey:
    mat, inv = _random_invertible(params, rng or _SYSRAND)
    return HEKey(mat, inv, params)


def identity_key(params: HEParams) -> HEKey:
    eye = modmat.identity(params.d)
    return HEKey(eye, eye, params)


def split_key(key: HEKey, t: int, rng: random.Random | None = None) -> list[HEKey]:
    """Split ``key`` into t shares whose ordered product is ``key``.

    The first t-1 shares are uniformly random invertible matrices; the last
    one is solved as (k_1 ... k_{t-1})^-1 * key.
    """
    if t < 2:
        raise ValueError("need at least two shares")
    rng = rng or _SYSRAND
    parts = [gen_key(key.params, rng) for _ in range(t - 1)]
    prefix = parts[0]
    for part in parts[1:]:
        prefix = prefix @ part
    n = key.params.n
    last = HEKey(
        modmat.matmul(prefix.inv, key.mat, n),
        modmat.matmul(key.inv, prefix.mat, n),
        key.params,
    )
    return parts + [last]


def product(keys: Sequence[HEKey]) -> HEKey:
    out = keys[0]
    for k in keys[1:]:
        out = out @ k
    return out


def encrypt(msg: int, key: HEKey, rng: random.Random | None = None) -> Ciphertext:
    params = key.params
    n, d = params.n, params.d
    if not 0 <= msg < n:
        raise ValueError("message must be a residue in [0, n)")
    rng = rng or _SYSRAND
    rows = []
    for i in range(d):
        row = [0] * d
        if i == 0:
            row[0] = msg
        else:
            row[i] = _random_unit(n, rng)
        for j in range(i + 1, d):
            row[j] = rng.randrange(n)
        rows.append(tuple(row))
    return Ciphertext(modmat.matmul3(key.inv, tuple(rows), key.mat, n), params)


def _random_unit(n: int, rng: random.Random) -> int:
    while True:
        x = rng.randrange(1, n)
        try:
            pow(x, -1, n)
            return x
        except ValueError:
            continue


def decrypt(c: Ciphertext, key: HEKey) -> int:
    n = key.params.n
    # only row 0 of K*C and column 0 of K^-1 are needed for entry (0, 0)
    row0 = [sum(key.mat[0][t] * c.mat[t][j] for t in range(len(c.mat))) % n
            for j in range(len(c.mat))]
    return sum(row0[j] * key.inv[j][0] for j in range(len(row0))) % n


def he_add(c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    _same(c1, c2)
    return Ciphertext(modmat.matadd(c1.mat, c2.mat, c1.params.n), c1.params)


def he_sub(c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    _same(c1, c2)
    return Ciphertext(modmat.matsub(c1.mat, c2.mat, c1.params.n), c1.params)


def he_mul(c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    _same(c1, c2)
    return Ciphertext(modmat.matmul(c1.mat, c2.mat, c1.params.n), c1.params)


def _same(c1: Ciphertext, c2: Ciphertext) -> None:
    if c1.params.n != c2.params.n or len(c1.mat) != len(c2.mat):
        raise PicError("ciphertexts use different parameters")


def convert_append(c: Ciphertext, factor: HEKey) -> Ciphertext:
    """Re-key a ciphertext from K to K*factor."""
    return Ciphertext(modmat.matmul3(factor.inv, c.mat, factor.mat, c.params.n), c.params)


def convert_strip(c: Ciphertext, factor: HEKey) -> Ciphertext:
    """Re-key a ciphertext from K*factor to K."""
    return Ciphertext(modmat.matmul3(factor.mat, c.mat, factor.inv, c.params.n), c.params)


# -- wire formats -----------------------------------------------------------

def _pack_entries(mat: Matrix, width: int) -> bytes:
    return b"".join(x.to_bytes(width, "big") for row in mat for x in row)


def _unpack_entries(buf: bytes, d: int, width: int, n: int) -> Matrix:
    if len(buf) != d * d * width:
        raise MalformedFileError("truncated matrix payload")
    vals = [int.from_bytes(buf[i:i + width], "big") for i in range(0, len(buf), width)]
    if any(v >= n for v in vals):
        raise MalformedFileError("matrix entry out of range")
    return tuple(tuple(vals[r * d:(r + 1) * d]) for r in range(d))


def _read_header(data: bytes, magic: bytes, params: HEParams) -> int:
    if len(data) < _HEADER.size:
        raise MalformedFileError("short header")
    got_magic, version, d, width = _HEADER.unpack_from(data)
    if got_magic != magic:
        raise MalformedFileError(f"bad magic {got_magic!r}")
    if version != FORMAT_VERSION:
        raise MalformedFileError(f"unsupported version {version}")
    if d != params.d or width != params.entry_bytes:
        raise MalformedFileError("header does not match parameters")
    return _HEADER.size


HEADER_SIZE = _HEADER.size


def ciphertext_payload(c: Ciphertext) -> bytes:
    """Matrix entries only: d*d fixed-width big-endian integers, row-major."""
    return _pack_entries(c.mat, c.params.entry_bytes)


def serialize_ciphertext(c: Ciphertext) -> bytes:
    p = c.params
    return _HEADER.pack(CT_MAGIC, FORMAT_VERSION, p.d, p.entry_bytes) + ciphertext_payload(c)


def deserialize_ciphertext(data: bytes, params: HEParams) -> Ciphertext:
    off = _read_header(data, CT_MAGIC, params)
    return Ciphertext(_unpack_entries(data[off:], params.d, params.entry_bytes, params.n), params)


def serialize_key(key: HEKey) -> bytes:
    p = key.params
    w = p.entry_bytes
    return (_HEADER.pack(KEY_MAGIC, FORMAT_VERSION, p.d, w)
            + _pack_entries(key.mat, w) + _pack_entries(key.inv, w))


def deserialize_key(data: bytes, params: HEParams) -> HEKey:
    off = _read_header(data, KEY_MAGIC, params)
    size = params.d * params.d * params.entry_bytes
    body = data[off:]
    if len(body) != 2 * size:
        raise MalformedFileError("truncated key payload")
    mat = _unpack_entries(body[:size], params.d, params.entry_bytes, params.n)
    inv = _unpack_entries(body[size:], params.d, params.entry_bytes, params.n)
    if modmat.matmul(mat, inv, params.n) != modmat.identity(params.d):
        raise MalformedFileError("key inverse does not match")
    return HEKey(mat, inv, params)
