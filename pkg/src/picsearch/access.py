"""Hashed-attribute access trees and a policy-gated envelope.

Owners publish access trees whose leaves are SHA-256 hashes of attributes;
queriers submit hashed attribute sets, and the cloud evaluates the trees
without seeing raw attributes. The envelope is AES-GCM with the serialized
policy as associated data. It is released only when the policy evaluates to
true; this stands in for CP-ABE and is enforced by whoever holds the
envelope, not by the cryptography.
"""
from __future__ import annotations

import hashlib
import os
import re
import unicodedata
from dataclasses import dataclass
from typing import Iterable, Union

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import AuthenticationError, AuthorizationError, PolicySyntaxError


def canonical(attr: str) -> str:
    return unicodedata.normalize("NFC", attr).strip().lower()


def hash_attribute(attr: str) -> bytes:
    return hashlib.sha256(canonical(attr).encode("utf-8")).digest()


def hash_attributes(raw: Iterable[str]) -> frozenset[bytes]:
    return frozenset(hash_attribute(a) for a in raw)


@dataclass(frozen=True)
class Leaf:
    digest: bytes


@dataclass(frozen=True)
class Gate:
    threshold: int
    children: tuple["AccessTree", ...]

    def __post_init__(self):
        if not self.children:
            raise PolicySyntaxError("gate needs at least one child")
        if not 1 <= self.threshold <= len(self.children):
            raise PolicySyntaxError(
                f"threshold {self.threshold} not in [1, {len(self.children)}]")


AccessTree = Union[Leaf, Gate]


def evaluate(tree: AccessTree, attrs: Iterable[bytes]) -> bool:
    attrs = attrs if isinstance(attrs, (set, frozenset)) else frozenset(attrs)
    if isinstance(tree, Leaf):
        return tree.digest in attrs
    need = tree.threshold
    for child in tree.children:
        if evaluate(child, attrs):
            need -= 1
            if need == 0:
                return True
    return False


def leaves(tree: AccessTree) -> list[bytes]:
    if isinstance(tree, Leaf):
        return [tree.digest]
    return [d for c in tree.children for d in leaves(c)]


_TOKEN = re.compile(r'\s*(?:(\()|(\))|"((?:[^"\\]|\\.)*)"|([^\s()"]+))')


def _tokenize(text: str) -> list[tuple[str, str]]:
    out = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise PolicySyntaxError(f"unexpected input at offset {pos}")
        pos = m.end()
        if m.group(1):
            out.append(("(", "("))
        elif m.group(2):
            out.append((")", ")"))
        elif m.group(3) is not None:
            out.append(("str", re.sub(r"\\(.)", r"\1", m.group(3))))
        else:
            out.append(("sym", m.group(4)))
    return out


def parse_policy(text: str) -> AccessTree:
    """Parse an s-expression policy and hash its attributes.

    Grammar: ``"attr"`` | ``(and P ...)`` | ``(or P ...)`` | ``(thresh t P ...)``.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise PolicySyntaxError("empty policy")
    tree, pos = _parse(tokens, 0)
    if pos != len(tokens):
        raise PolicySyntaxError("trailing tokens after policy")
    return tree


def _parse(tokens, pos):
    if pos >= len(tokens):
        raise PolicySyntaxError("unexpected end of policy")
    kind, val = tokens[pos]
    if kind in ("str", "sym"):
        if kind == "sym" and val.lower() in ("and", "or", "thresh"):
            raise PolicySyntaxError(f"operator {val!r} outside parentheses")
        return Leaf(hash_attribute(val)), pos + 1
    if kind == ")":
        raise PolicySyntaxError("unbalanced ')'")
    pos += 1
    if pos >= len(tokens) or tokens[pos][0] != "sym":
        raise PolicySyntaxError("expected operator after '('")
    op = tokens[pos][1].lower()
    pos += 1
    threshold = None
    if op == "thresh":
        if pos >= len(tokens) or tokens[pos][0] != "sym" or not tokens[pos][1].isdigit():
            raise PolicySyntaxError("thresh needs an integer threshold")
        threshold = int(tokens[pos][1])
        pos += 1
    elif op not in ("and", "or"):
        raise PolicySyntaxError(f"unknown operator {op!r}")
    children = []
    while pos < len(tokens) and tokens[pos][0] != ")":
        child, pos = _parse(tokens, pos)
        children.append(child)
    if pos >= len(tokens):
        raise PolicySyntaxError("missing ')'")
    if op == "and":
        threshold = len(children)
    elif op == "or":
        threshold = 1
    return Gate(threshold or 0, tuple(children)), pos + 1


def serialize_tree(tree: AccessTree) -> bytes:
    """Canonical bytes of a tree, used as envelope associated data."""
    if isinstance(tree, Leaf):
        return b"L" + tree.digest
    body = b"".join(serialize_tree(c) for c in tree.children)
    return b"G" + tree.threshold.to_bytes(2, "big") + len(tree.children).to_bytes(2, "big") + body


@dataclass(frozen=True)
class Envelope:
    policy: AccessTree
    nonce: bytes
    ciphertext: bytes
    data_key: bytes

    def __repr__(self) -> str:
        return f"Envelope({len(self.ciphertext)} bytes)"


def seal_envelope(payload: bytes, tree: AccessTree, key: bytes | None = None) -> Envelope:
    key = key or AESGCM.generate_key(bit_length=256)
    nonce = os.urandom(12)
    ct = AESGCM(key).encrypt(nonce, payload, serialize_tree(tree))
    return Envelope(tree, nonce, ct, key)


def open_envelope(env: Envelope, attrs: Iterable[bytes]) -> bytes:
    if not evaluate(env.policy, attrs):
        raise AuthorizationError("attributes do not satisfy the envelope policy")
    try:
        return AESGCM(env.data_key).decrypt(env.nonce, env.ciphertext, serialize_tree(env.policy))
    except InvalidTag:
        raise AuthenticationError("envelope failed authentication") from None
