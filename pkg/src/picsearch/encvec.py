"""Per-coordinate encrypted vectors and homomorphic distance kernels."""
from __future__ import annotations

import random
import struct
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

from . import he
from .errors import ConfigError, DimensionMismatch, MalformedFileError
from .fixedpoint import DEFAULT_FXP, FxpConfig, lift, lower
from .he import Ciphertext, HEKey, HEParams

VEC_MAGIC = b"PICV"
_VEC_HEADER = struct.Struct(">4sBHII")

KeyTag = tuple[str, ...]


@dataclass(frozen=True)
class PlainVector:
    """Fixed-point coordinates (raw signed integers) of one feature vector."""

    coords: tuple[int, ...]
    cfg: FxpConfig = DEFAULT_FXP

    def __post_init__(self):
        if len(self.coords) < 1:
            raise DimensionMismatch("vector must have at least one coordinate")
        bound = self.cfg.raw_bound
        if any(abs(c) >= bound for c in self.coords):
            raise ConfigError("coordinate outside the fixed-point range")

    @property
    def dim(self) -> int:
        return len(self.coords)

    @classmethod
    def from_raw(cls, raws, cfg: FxpConfig = DEFAULT_FXP) -> "PlainVector":
        return cls(tuple(int(x) for x in raws), cfg)


@dataclass(frozen=True)
class EncVector:
    cts: tuple[Ciphertext, ...]
    key_tag: KeyTag = ()

    @property
    def dim(self) -> int:
        return len(self.cts)

    @property
    def params(self) -> HEParams:
        return self.cts[0].params


def check_overflow(dim: int, cfg: FxpConfig, params: HEParams) -> None:
    """Reject (dim, cfg, params) combinations whose sums could wrap mod n.

    A coordinate difference is below 2^word_bits in magnitude, so a squared
    distance or a dot product over ``dim`` terms stays below
    dim * 2^(2*word_bits).
    """
    worst = dim * (1 << (2 * cfg.word_bits))
    if 2 * worst >= params.n:
        raise ConfigError(
            f"dim={dim} with {cfg.word_bits}-bit words can overflow a "
            f"{params.n.bit_length()}-bit modulus"
        )


def encrypt_vector(v: PlainVector, key: HEKey, rng: random.Random | None = None,
                   tag: KeyTag = ()) -> EncVector:
    n = key.params.n
    return EncVector(tuple(he.encrypt(lift(c, n), key, rng) for c in v.coords), tag)


def decrypt_vector(x: EncVector, key: HEKey, cfg: FxpConfig = DEFAULT_FXP) -> PlainVector:
    n = key.params.n
    return PlainVector(tuple(lower(he.decrypt(c, key), n) for c in x.cts), cfg)


def _check_dims(x: EncVector, y: EncVector) -> None:
    if x.dim != y.dim:
        raise DimensionMismatch(f"dimension {x.dim} != {y.dim}")


def phi_distance(x: EncVector, y: EncVector) -> Ciphertext:
    """Ciphertext of the squared Euclidean distance, scale 2^(2F)."""
    _check_dims(x, y)
    terms = []
    for a, b in zip(x.cts, y.cts):
        diff = he.he_sub(a, b)
        terms.append(he.he_mul(diff, diff))
    return reduce(he.he_add, terms)


def phi_dot(x: EncVector, y: EncVector) -> Ciphertext:
    """Ciphertext of the inner product, scale 2^(2F)."""
    _check_dims(x, y)
    return reduce(he.he_add, (he.he_mul(a, b) for a, b in zip(x.cts, y.cts)))


def decrypt_scaled(c: Ciphertext, key: HEKey) -> int:
    """Signed integer value of a kernel output, still at scale 2^(2F)."""
    return lower(he.decrypt(c, key), key.params.n)


def decrypt_score(c: Ciphertext, key: HEKey, cfg: FxpConfig = DEFAULT_FXP) -> float:
    return decrypt_scaled(c, key) / float(1 << (2 * cfg.frac_bits))


def convert_vector(x: EncVector, factor: HEKey | Sequence[HEKey], mode: str = "append",
                   names: str | Sequence[str] | None = None) -> EncVector:
    """Re-key every coordinate by ``factor`` (one key or an ordered list).

    ``names`` labels the factors for the audit tag; strip mode removes the
    trailing label when it matches and records an inverse marker otherwise.
    """
    factors = [factor] if isinstance(factor, HEKey) else list(factor)
    if names is None:
        labels: list[str | None] = [None] * len(factors)
    elif isinstance(names, str):
        labels = [names]
    else:
        labels = list(names)
    if mode not in ("append", "strip"):
        raise ValueError(f"unknown conversion mode {mode!r}")
    cts = x.cts
    tag = x.key_tag
    if mode == "append":
        for f, label in zip(factors, labels):
            cts = tuple(he.convert_append(c, f) for c in cts)
            if label:
                tag = tag + (label,)
    else:
        for f, label in zip(factors, labels):
            cts = tuple(he.convert_strip(c, f) for c in cts)
            if label:
                tag = tag[:-1] if tag and tag[-1] == label else tag + ("~" + label,)
    return EncVector(cts, tag)


def vector_payload(x: EncVector) -> bytes:
    return b"".join(he.ciphertext_payload(c) for c in x.cts)


def serialize_vector(x: EncVector) -> bytes:
    p = x.params
    return _VEC_HEADER.pack(VEC_MAGIC, he.FORMAT_VERSION, p.d, p.entry_bytes, x.dim) + vector_payload(x)


def deserialize_vector(data: bytes, params: HEParams) -> EncVector:
    if len(data) < _VEC_HEADER.size:
        raise MalformedFileError("short header")
    magic, version, d, width, dim = _VEC_HEADER.unpack_from(data)
    if magic != VEC_MAGIC or version != he.FORMAT_VERSION:
        raise MalformedFileError("not a PICV record")
    if d != params.d or width != params.entry_bytes:
        raise MalformedFileError("header does not match parameters")
    step = d * d * width
    body = data[_VEC_HEADER.size:]
    if len(body) != dim * step:
        raise MalformedFileError("truncated vector payload")
    cts = tuple(
        Ciphertext(he._unpack_entries(body[i * step:(i + 1) * step], d, width, params.n), params)
        for i in range(dim)
    )
    return EncVector(cts)


VECTOR_HEADER_SIZE = _VEC_HEADER.size
