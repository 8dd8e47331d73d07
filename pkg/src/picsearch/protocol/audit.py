"""Information-flow audit log and the predicates checked over it.

Every message is recorded before delivery, together with entity-local notes
(ciphertexts stored, kernels evaluated). Ciphertext-bearing objects carry a
symbolic key tag, e.g. ``("k_u:alice", "k_u':alice")``; the predicates
reason about which entity could decrypt what by normalizing these tags with
the key identities the trusted party announced.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterator

from ..encvec import EncVector
from ..parallel import DistRecord
from .messages import Kind, Message

MASTER = "k"
KA_KEY = "k_KA"
CS_KEY = "k_CS"


@dataclass
class Note:
    entity: str
    op: str
    query_id: bytes | None = None
    count: int = 0
    tags: tuple = ()


@dataclass
class AuditLog:
    events: list[Message | Note] = field(default_factory=list)

    def record(self, msg: Message) -> None:
        self.events.append(msg)

    def note(self, entity: str, op: str, query_id: bytes | None = None, count: int = 0,
             tags: tuple = ()) -> None:
        self.events.append(Note(entity, op, query_id, count, tags))

    @property
    def messages(self) -> list[Message]:
        return [e for e in self.events if isinstance(e, Message)]

    @property
    def notes(self) -> list[Note]:
        return [e for e in self.events if isinstance(e, Note)]


def tagged_objects(payload: Any) -> Iterator[tuple[str, tuple]]:
    """Yield (kind, key_tag) for every ciphertext-bearing object in a payload."""
    if isinstance(payload, EncVector):
        yield "vector", payload.key_tag
    elif isinstance(payload, DistRecord):
        if payload.enc is not None:
            yield "distance", payload.key_tag
    elif isinstance(payload, dict):
        for v in payload.values():
            yield from tagged_objects(v)
    elif isinstance(payload, (list, tuple)):
        for v in payload:
            yield from tagged_objects(v)


def identities(log: AuditLog) -> list[tuple[str, ...]]:
    """Factorizations of the master key announced by the trusted party."""
    return [n.tags for n in log.notes if n.op == "identity"]


def normalize(tag: tuple, ids: list[tuple[str, ...]]) -> tuple[str, ...]:
    canon = next((f for f in ids if f and f[0] == KA_KEY), (KA_KEY, CS_KEY))
    folds = [f for f in ids if f != canon]
    tag = tuple(tag)
    changed = True
    while changed:
        changed = False
        for fac in folds:
            w = len(fac)
            for i in range(len(tag) - w + 1):
                if tag[i:i + w] == fac:
                    tag = tag[:i] + (MASTER,) + tag[i + w:]
                    changed = True
                    break
        for i in range(len(tag) - 1):
            if tag[i] == MASTER and tag[i + 1].startswith("~"):
                tag = tag[:i] + canon + tag[i + 1:]
                changed = True
                break
        for i in range(len(tag) - 1):
            a, b = tag[i], tag[i + 1]
            if b == "~" + a or a == "~" + b:
                tag = tag[:i] + tag[i + 2:]
                changed = True
                break
    return tag


def holdings(log: AuditLog) -> dict[str, set[str]]:
    """Key names each entity has received."""
    held: dict[str, set[str]] = {"TP": {MASTER}}
    for msg in log.messages:
        if msg.kind == Kind.KEY_SHARE:
            held.setdefault(msg.receiver, set()).add(msg.payload["name"])
    return held


def decryptable_by(tag: tuple, keys: set[str]) -> bool:
    atoms = {a.lstrip("~") for a in tag}
    return bool(atoms) and atoms <= keys


def _seen_by(log: AuditLog, entity: str) -> Iterator[tuple[str, tuple]]:
    for msg in log.messages:
        if msg.receiver == entity:
            yield from tagged_objects(msg.payload)
    for note in log.notes:
        if note.entity == entity and note.op in ("store", "convert"):
            for tag in note.tags:
                yield "vector", tag


# -- predicates ---------------------------------------------------------------

def cs_blind(log: AuditLog) -> bool:
    """The cloud never held an object it could decrypt with its own keys."""
    ids = identities(log)
    keys = holdings(log).get("CS", set())
    return all(not decryptable_by(normalize(tag, ids), keys) for _, tag in _seen_by(log, "CS"))


def ka_distances_only(log: AuditLog) -> bool:
    """The key agent only ever received decryptable objects that are distances under k_KA."""
    ids = identities(log)
    keys = holdings(log).get("KA", set())
    for kind, tag in _seen_by(log, "KA"):
        norm = normalize(tag, ids)
        if kind == "distance" and norm != (KA_KEY,):
            return False
        if kind == "vector" and decryptable_by(norm, keys):
            return False
    return True


def queriers(log: AuditLog) -> dict[bytes, str]:
    out = {}
    for msg in log.messages:
        if msg.query_id and msg.sender.startswith("client:") and msg.query_id not in out:
            out[msg.query_id] = msg.sender
    return out


def owners_silent(log: AuditLog) -> bool:
    """No client other than the querier receives anything during a search."""
    who = queriers(log)
    for msg in log.messages:
        if msg.query_id and msg.receiver.startswith("client:"):
            if who.get(msg.query_id) != msg.receiver:
                return False
    return True


def denied_queries(log: AuditLog) -> set[bytes]:
    return {m.query_id for m in log.messages
            if m.kind == Kind.RESULT and m.payload.get("permitted_owners") == 0}


def phi_count(log: AuditLog, query_id: bytes) -> int:
    return sum(n.count for n in log.notes if n.op == "phi" and n.query_id == query_id)


def denied_no_phi(log: AuditLog) -> bool:
    return all(phi_count(log, q) == 0 for q in denied_queries(log))


def audit_assert(log: AuditLog, predicate: Callable[[AuditLog], bool]) -> bool:
    return bool(predicate(log))


ALL_PREDICATES = {
    "cs_blind": cs_blind,
    "ka_distances_only": ka_distances_only,
    "owners_silent": owners_silent,
    "denied_no_phi": denied_no_phi,
}
