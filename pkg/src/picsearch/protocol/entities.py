"""The four protocol entities as message-driven state machines.

Each entity only reacts to messages delivered by the :class:`Network`, which
records every message in the audit log before delivery and processes the
queue in FIFO order, one message at a time per entity.
"""
from __future__ import annotations

import io
import random
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .. import he
from ..access import AccessTree, Envelope, Gate, Leaf, evaluate, open_envelope, seal_envelope
from ..cluster_index import ClusterIndex, VectorRef, leaders, merge, restrict
from ..config import SystemConfig
from ..descriptor import CorpusStats, Vocabulary
from ..encvec import EncVector, PlainVector, convert_vector, encrypt_vector
from ..errors import ProtocolError
from ..he import HEKey, HEParams
from ..parallel import DistRecord, badness, decrypt_records, k_smallest, map_distances, threshold_select
from . import prep
from .audit import CS_KEY, KA_KEY, AuditLog
from .messages import Kind, Message


# a 1-of-1 gate on a digest no attribute hashes to
_DENY_ALL = Gate(1, (Leaf(b"\x00" * 32),))


def pack_owner_params(vocab: Vocabulary, stats: CorpusStats) -> bytes:
    """Serialize (dictionary, per-image counts, doc frequencies, N) for the envelope."""
    ids = sorted(stats.counts)
    buf = io.BytesIO()
    np.savez(buf, words=vocab.words, doc_freq=stats.doc_freq, N=np.array(stats.N),
             image_ids=np.array(ids, dtype=str),
             counts=np.array([stats.counts[i] for i in ids]).reshape(len(ids), vocab.v))
    return buf.getvalue()


def unpack_owner_params(data: bytes) -> tuple[Vocabulary, CorpusStats]:
    with np.load(io.BytesIO(data), allow_pickle=False) as z:
        counts = {str(i): c for i, c in zip(z["image_ids"], z["counts"])}
        return Vocabulary(z["words"]), CorpusStats(int(z["N"]), z["doc_freq"], counts)


class Network:
    """In-process transport: trusted, ordered delivery with an audit trail."""

    def __init__(self, log: AuditLog | None = None):
        self.log = log or AuditLog()
        self.entities: dict[str, "Entity"] = {}
        self.queue: deque[Message] = deque()

    def attach(self, entity: "Entity") -> None:
        self.entities[entity.name] = entity
        entity.net = self

    def send(self, msg: Message) -> None:
        if msg.receiver not in self.entities:
            raise ProtocolError(f"unknown receiver {msg.receiver!r}")
        self.log.record(msg)
        self.queue.append(msg)

    def run(self) -> None:
        while self.queue:
            msg = self.queue.popleft()
            self.entities[msg.receiver].handle(msg)


class Entity:
    name = "?"

    def __init__(self):
        self.net: Network | None = None

    def send(self, receiver: str, kind: Kind, payload: dict | None = None,
             query_id: bytes | None = None) -> None:
        self.net.send(Message(self.name, receiver, kind, payload or {}, query_id))

    def note(self, op: str, query_id: bytes | None = None, count: int = 0, tags: tuple = ()) -> None:
        self.net.log.note(self.name, op, query_id, count, tags)

    def handle(self, msg: Message) -> None:
        fn = getattr(self, "on_" + msg.kind.name.lower(), None)
        if fn is None:
            raise ProtocolError(f"{self.name} cannot handle {msg.kind.name}")
        fn(msg)


def client_name(user: str) -> str:
    return f"client:{user}"


def user_key_name(user: str, stage: int) -> str:
    return ["k_u", "k_u'", "k_u''"][stage] + ":" + user


class TrustedParty(Entity):
    name = "TP"

    def __init__(self, rng: random.Random):
        super().__init__()
        self.rng = rng
        self.params: HEParams | None = None
        self._k: HEKey | None = None
        self.registered: set[str] = set()

    def init(self, lambda_: int, m_lvl: int) -> HEParams:
        if self.params is not None:
            raise ProtocolError("system already initialized")
        self.params = he.gen_params(lambda_, m_lvl, self.rng)
        self._k = he.gen_key(self.params, self.rng)
        k_ka, k_cs = he.split_key(self._k, 2, self.rng)
        self.note("identity", tags=(KA_KEY, CS_KEY))
        self.send("KA", Kind.KEY_SHARE, {"name": KA_KEY, "key": k_ka, "params": self.params})
        self.send("CS", Kind.KEY_SHARE, {"name": CS_KEY, "key": k_cs, "params": self.params})
        return self.params

    def on_register(self, msg: Message) -> None:
        user = msg.payload["user"]
        if self.params is None:
            raise ProtocolError("system not initialized")
        if user in self.registered:
            raise ProtocolError(f"user {user!r} already registered")
        self.registered.add(user)
        k_u, k_u1, k_u2 = he.split_key(self._k, 3, self.rng)
        names = tuple(user_key_name(user, i) for i in range(3))
        self.note("identity", tags=names)
        self.send(client_name(user), Kind.KEY_SHARE, {"name": names[0], "key": k_u, "params": self.params})
        self.send("KA", Kind.KEY_SHARE, {"name": names[1], "key": k_u1, "user": user})
        self.send("CS", Kind.KEY_SHARE, {"name": names[2], "key": k_u2, "user": user})


@dataclass
class _Pending:
    querier: str
    scheme: str
    options: dict[str, Any] = field(default_factory=dict)
    phi: int = 0


class KeyAgent(Entity):
    name = "KA"

    def __init__(self, config: SystemConfig):
        super().__init__()
        self.config = config
        self.params: HEParams | None = None
        self.k_ka: HEKey | None = None
        self.user_keys: dict[str, HEKey] = {}
        self.pending: dict[bytes, _Pending] = {}

    def on_key_share(self, msg: Message) -> None:
        if msg.payload["name"] == KA_KEY:
            self.k_ka = msg.payload["key"]
            self.params = msg.payload["params"]
        else:
            self.user_keys[msg.payload["user"]] = msg.payload["key"]

    def _user_key(self, user: str) -> HEKey:
        if user not in self.user_keys:
            raise ProtocolError(f"unregistered user {user!r}")
        return self.user_keys[user]

    def on_upload(self, msg: Message) -> None:
        owner = msg.payload["owner"]
        key = self._user_key(owner)
        name = user_key_name(owner, 1)
        items = [(ref, convert_vector(vec, key, "append", name)) for ref, vec in msg.payload["items"]]
        self.send("CS", Kind.UPLOAD_CONVERTED, {"owner": owner, "items": items})

    def on_query(self, msg: Message) -> None:
        querier = msg.payload["querier"]
        key = self._user_key(querier)
        name = user_key_name(querier, 1)
        self.pending[msg.query_id] = _Pending(msg.sender, msg.payload["scheme"], msg.payload["options"])
        vectors = msg.payload["vectors"]
        if isinstance(vectors, dict):
            conv = {o: convert_vector(v, key, "append", name) for o, v in vectors.items()}
        else:
            conv = [convert_vector(v, key, "append", name) for v in vectors]
        self.send("CS", Kind.QUERY_CONVERTED,
                  {"querier": querier, "scheme": msg.payload["scheme"], "vectors": conv},
                  msg.query_id)

    def _finish(self, qid: bytes, ranked: list, permitted: int) -> None:
        pend = self.pending.pop(qid)
        self.send(pend.querier, Kind.RESULT,
                  {"ranked": ranked, "permitted_owners": permitted, "phi_count": pend.phi}, qid)

    def on_dist_batch(self, msg: Message) -> None:
        qid = msg.query_id
        pend = self.pending[qid]
        pend.phi += len(msg.payload["records"])
        kernel = self.config.kernel
        records = decrypt_records(msg.payload["records"], self.k_ka, pend.options["workers"])
        if msg.payload["permitted_owners"] == 0:
            self._finish(qid, [], 0)
            return
        if msg.payload["level"] == 1:
            self._level1(msg, pend, records, kernel)
        elif pend.scheme == "basic":
            self._vote(qid, pend, records, kernel, msg.payload["permitted_owners"])
        else:
            self._threshold_results(qid, pend, records, kernel, msg.payload["permitted_owners"])

    def _level1(self, msg, pend, records, kernel):
        opts = pend.options
        if pend.scheme == "basic":
            ranked = defaultdict(list)
            for r in sorted(records, key=lambda r: (r.query, badness(r.value, kernel), r.ref)):
                ranked[r.query].append(r.ref)
            beta = opts["beta"]
            payload = {"ranked": dict(ranked), "beta": beta, "min_members": opts["k_nn"]}
        else:
            chosen, _ = threshold_select(records, opts["beta"], opts["theta"], kernel)
            chosen_refs = [r.ref for r in chosen]
            taken = set(chosen_refs)
            rest = sorted((r for r in records if r.ref not in taken),
                          key=lambda r: (badness(r.value, kernel), r.ref))
            payload = {"ranked": {0: chosen_refs + [r.ref for r in rest]},
                       "beta": len(chosen_refs), "min_members": opts["k_nn"]}
        self.send("CS", Kind.CLUSTER_REQUEST, payload, msg.query_id)

    def _vote(self, qid, pend, records, kernel, permitted):
        by_query = defaultdict(list)
        for r in records:
            by_query[r.query].append(r)
        scores: dict[tuple[str, str], int] = defaultdict(int)
        for q in sorted(by_query):
            for r in k_smallest(by_query[q], pend.options["k_nn"], kernel):
                scores[(r.ref.owner_id, r.ref.image_id)] += 1
        ranked = sorted(((o, i, s) for (o, i), s in scores.items()), key=lambda t: (-t[2], t[0], t[1]))
        self._finish(qid, ranked, permitted)

    def _threshold_results(self, qid, pend, records, kernel, permitted):
        kept, _ = threshold_select(records, pend.options["k_nn"], pend.options["theta_prime"], kernel)
        ranked = [(r.ref.owner_id, r.ref.image_id, r.value) for r in kept]
        self._finish(qid, ranked, permitted)


class CloudServer(Entity):
    name = "CS"

    def __init__(self, config: SystemConfig):
        super().__init__()
        self.config = config
        self.params: HEParams | None = None
        self.k_cs: HEKey | None = None
        self.user_keys: dict[str, HEKey] = {}
        self.store: dict[VectorRef, EncVector] = {}
        self.index = ClusterIndex()
        self.policies: dict[str, AccessTree | None] = {}
        self.envelopes: dict[str, Envelope] = {}
        self.attrs: dict[bytes, frozenset] = {}
        self.queries: dict[bytes, dict] = {}

    def on_key_share(self, msg: Message) -> None:
        if msg.payload["name"] == CS_KEY:
            self.k_cs = msg.payload["key"]
            self.params = msg.payload["params"]
        else:
            self.user_keys[msg.payload["user"]] = msg.payload["key"]

    def on_policy(self, msg: Message) -> None:
        self.policies[msg.payload["owner"]] = msg.payload["tree"]

    def on_index(self, msg: Message) -> None:
        owner = msg.payload["owner"]
        others = restrict(self.index, set(self.index.owners.values()) - {owner})
        self.index = merge(others, msg.payload["index"], owner)

    def on_envelope_upload(self, msg: Message) -> None:
        self.envelopes[msg.payload["owner"]] = msg.payload["envelope"]

    def on_upload_converted(self, msg: Message) -> None:
        owner = msg.payload["owner"]
        if owner not in self.user_keys:
            raise ProtocolError(f"unregistered user {owner!r}")
        key = self.user_keys[owner]
        name = user_key_name(owner, 2)
        tags = []
        for ref, vec in msg.payload["items"]:
            final = convert_vector(vec, key, "append", name)
            self.store[ref] = final
            tags.append(final.key_tag)
        self.note("store", count=len(tags), tags=tuple(sorted(set(tags))))

    def on_attrs(self, msg: Message) -> None:
        self.attrs[msg.query_id] = frozenset(msg.payload["attrs"])

    def permitted_owners(self, attrs) -> list[str]:
        present = set(self.index.owners.values())
        return sorted(o for o, tree in self.policies.items()
                      if tree is not None and o in present and evaluate(tree, attrs))

    def on_envelope_request(self, msg: Message) -> None:
        attrs = frozenset(msg.payload["attrs"])
        self.attrs[msg.query_id] = attrs
        allowed = {o: self.envelopes[o] for o in self.permitted_owners(attrs) if o in self.envelopes}
        self.send(msg.sender, Kind.ENVELOPES, {"envelopes": allowed}, msg.query_id)

    def _to_ka(self, vec: EncVector) -> EncVector:
        return convert_vector(vec, self.k_cs, "strip", CS_KEY)

    def on_query_converted(self, msg: Message) -> None:
        qid = msg.query_id
        querier = msg.payload["querier"]
        key = self.user_keys[querier]
        name = user_key_name(querier, 2)

        def rekey(v):
            return self._to_ka(convert_vector(v, key, "append", name))

        vectors = msg.payload["vectors"]
        if isinstance(vectors, dict):
            qvecs = {o: rekey(v) for o, v in vectors.items()}
        else:
            qvecs = [rekey(v) for v in vectors]
        permitted = self.permitted_owners(self.attrs.get(qid, frozenset()))
        if isinstance(qvecs, dict):
            permitted = [o for o in permitted if o in qvecs]
        self.queries[qid] = {"vectors": qvecs, "permitted": permitted, "cache": {}}
        self.note("convert", qid, count=len(vectors),
                  tags=tuple(sorted({v.key_tag for v in (qvecs.values() if isinstance(qvecs, dict) else qvecs)})))
        if not permitted:
            self.send("KA", Kind.DIST_BATCH, {"level": 1, "records": [], "permitted_owners": 0}, qid)
            return
        pool = leaders(self.index, permitted)
        records = self._distances(qid, pool)
        self.send("KA", Kind.DIST_BATCH,
                  {"level": 1, "records": records, "permitted_owners": len(permitted)}, qid)

    def _converted(self, qid: bytes, ref: VectorRef) -> EncVector:
        cache = self.queries[qid]["cache"]
        if ref not in cache:
            cache[ref] = self._to_ka(self.store[ref])
        return cache[ref]

    def _distances(self, qid: bytes, refs, only_query: int | None = None) -> list[DistRecord]:
        state = self.queries[qid]
        qvecs = state["vectors"]
        workers = self.config.workers
        out = []
        if isinstance(qvecs, dict):
            by_owner = defaultdict(list)
            for r in refs:
                by_owner[r.owner_id].append(r)
            for owner in sorted(by_owner):
                cands = [(r, self._converted(qid, r)) for r in by_owner[owner]]
                out += map_distances(qvecs[owner], cands, workers, self.config.kernel, 0)
        else:
            cands = [(r, self._converted(qid, r)) for r in refs]
            targets = range(len(qvecs)) if only_query is None else [only_query]
            for i in targets:
                out += map_distances(qvecs[i], cands, workers, self.config.kernel, i)
        self.note("phi", qid, count=len(out))
        return sorted(out, key=lambda r: (r.query, r.ref))

    def on_cluster_request(self, msg: Message) -> None:
        qid = msg.query_id
        beta, need = msg.payload["beta"], msg.payload["min_members"]
        records = []
        for q, ranked in sorted(msg.payload["ranked"].items()):
            chosen: set[VectorRef] = set()
            for pos, lead in enumerate(ranked):
                if pos >= beta and len(chosen) >= need:
                    break
                chosen.update(self.index.clusters[lead])
            qv = self.queries[qid]["vectors"]
            records += self._distances(qid, sorted(chosen), None if isinstance(qv, dict) else q)
        self.send("KA", Kind.DIST_BATCH,
                  {"level": 2, "records": records,
                   "permitted_owners": len(self.queries[qid]["permitted"])}, qid)
        self.queries.pop(qid, None)


@dataclass
class SearchResult:
    ranked: list[tuple[str, str, int]]
    permitted_owners: int
    phi_count: int
    query_id: bytes = b""

    @property
    def image_ids(self) -> list[tuple[str, str]]:
        return [(o, i) for o, i, _ in self.ranked]


class Client(Entity):
    """An image owner and/or querier."""

    def __init__(self, user: str, config: SystemConfig, rng: random.Random):
        super().__init__()
        self.user = user
        self.name = client_name(user)
        self.config = config
        self.rng = rng
        self.params: HEParams | None = None
        self.k_u: HEKey | None = None
        self.basic: prep.BasicUpload | None = None
        self.advanced: prep.AdvancedUpload | None = None
        self.uploads = 0
        self.results: dict[bytes, SearchResult] = {}
        self._queries: dict[bytes, dict] = {}

    @property
    def tag(self) -> tuple[str, ...]:
        return (user_key_name(self.user, 0),)

    def on_key_share(self, msg: Message) -> None:
        self.k_u = msg.payload["key"]
        self.params = msg.payload["params"]

    def _require_keys(self):
        if self.k_u is None:
            raise ProtocolError(f"user {self.user!r} is not registered")

    def _encrypt(self, raws) -> EncVector:
        return encrypt_vector(PlainVector.from_raw(raws, self.config.fxp), self.k_u, self.rng, self.tag)

    def upload_basic(self, images, seed: int) -> None:
        self._require_keys()
        if not images:
            return
        if self.advanced is not None:
            raise ProtocolError("owner already uploaded with the advanced scheme")
        if self.basic is None:
            up = prep.prepare_basic(self.user, images, self.config, seed)
            new_refs = up.refs
        else:
            up = prep.extend_basic(self.basic, self.user, images, self.config)
            new_refs = up.refs[len(self.basic.refs):]
        self.basic = up
        self.uploads += 1
        start = len(up.refs) - len(new_refs)
        items = [(ref, self._encrypt(up.raws[start + i])) for i, ref in enumerate(new_refs)]
        self.send("CS", Kind.INDEX, {"owner": self.user, "index": up.index})
        self.send("KA", Kind.UPLOAD, {"owner": self.user, "items": items})

    def upload_advanced(self, images, seed: int, policy: AccessTree | None,
                        vocab: Vocabulary | None = None) -> None:
        self._require_keys()
        if not images:
            return
        if self.basic is not None or self.advanced is not None:
            raise ProtocolError("advanced upload supports one corpus per owner")
        up = prep.prepare_advanced(self.user, images, self.config, seed, vocab)
        self.advanced = up
        self.uploads += 1
        env = seal_envelope(pack_owner_params(up.vocab, up.stats), policy if policy is not None else _DENY_ALL)
        items = [(ref, self._encrypt(row)) for ref, row in zip(up.refs, up.raws)]
        self.send("CS", Kind.ENVELOPE_UPLOAD, {"owner": self.user, "envelope": env})
        self.send("CS", Kind.INDEX, {"owner": self.user, "index": up.index})
        self.send("KA", Kind.UPLOAD, {"owner": self.user, "items": items})

    def start_basic_search(self, qid: bytes, vectors, attrs, options: dict) -> None:
        self._require_keys()
        raws = prep.query_raws_basic(vectors, self.config)
        encs = [self._encrypt(row) for row in raws]
        self.send("CS", Kind.ATTRS, {"attrs": sorted(attrs)}, qid)
        self.send("KA", Kind.QUERY, {"querier": self.user, "scheme": "basic",
                                     "vectors": encs, "options": options}, qid)

    def start_advanced_search(self, qid: bytes, vectors, attrs, options: dict) -> None:
        self._require_keys()
        self._queries[qid] = {"vectors": np.atleast_2d(vectors), "attrs": frozenset(attrs),
                              "options": options}
        self.send("CS", Kind.ENVELOPE_REQUEST, {"attrs": sorted(attrs)}, qid)

    def on_envelopes(self, msg: Message) -> None:
        qid = msg.query_id
        q = self._queries.pop(qid)
        per_owner = {}
        for owner, env in sorted(msg.payload["envelopes"].items()):
            vocab, stats = unpack_owner_params(open_envelope(env, q["attrs"]))
            raw = prep.query_raw_advanced(q["vectors"], vocab, stats, self.config)
            per_owner[owner] = self._encrypt(raw)
        if not per_owner:
            self.results[qid] = SearchResult([], 0, 0, qid)
            return
        self.send("KA", Kind.QUERY, {"querier": self.user, "scheme": "advanced",
                                     "vectors": per_owner, "options": q["options"]}, qid)

    def on_result(self, msg: Message) -> None:
        p = msg.payload
        self.results[msg.query_id] = SearchResult(list(p["ranked"]), p["permitted_owners"],
                                                  p["phi_count"], msg.query_id)

