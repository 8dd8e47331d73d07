"""Extended cluster-pruning index.

The owner builds the index on plaintext: C random vectors become leaders,
optionally arranged in an L-level tree, and every other vector is attached
to its alpha nearest bottom-level leaders. Only topology leaves the client;
members are :class:`VectorRef` handles pointing at ciphertexts held by the
cloud. Indices from several owners are merged by disjoint union with owner
labels.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientDataError, MalformedFileError

INDEX_MAGIC = b"PICX"
INDEX_VERSION = 1


@dataclass(frozen=True, order=True)
class VectorRef:
    owner_id: str
    image_id: str
    ordinal: int

    @property
    def locator(self) -> str:
        return f"{self.owner_id}/{self.image_id}/{self.ordinal}"


@dataclass
class ClusterIndex:
    clusters: dict[VectorRef, list[VectorRef]] = field(default_factory=dict)
    owners: dict[VectorRef, str] = field(default_factory=dict)
    # levels[0] is the bottom (the leaders); upper levels route insertions
    levels: list[list[VectorRef]] = field(default_factory=list)
    parents: dict[VectorRef, VectorRef] = field(default_factory=dict)
    C: int = 0
    L: int = 1
    alpha: int = 1

    @property
    def leader_count(self) -> int:
        return len(self.clusters)

    def refs(self) -> set[VectorRef]:
        out = set()
        for mem in self.clusters.values():
            out.update(mem)
        return out


def default_num_clusters(n: int) -> int:
    return max(1, math.ceil(math.sqrt(n)))


def sq_dists(query, points) -> np.ndarray:
    """Exact squared distances from one query to many points.

    Integer inputs are kept exact: int64 when the sums provably fit, Python
    ints otherwise. Float inputs use float64.
    """
    q = np.asarray(query)
    p = np.asarray(points)
    if p.ndim == 1:
        p = p[None, :]
    if np.issubdtype(q.dtype, np.integer) and np.issubdtype(p.dtype, np.integer):
        span = int(max(np.abs(q).max(initial=0), np.abs(p).max(initial=0)))
        if p.shape[1] * (2 * span) ** 2 < 2 ** 62:
            diff = p.astype(np.int64) - q.astype(np.int64)
            return np.einsum("ij,ij->i", diff, diff)
        diff = p.astype(object) - q.astype(object)
        return np.array([sum(int(x) * int(x) for x in row) for row in diff], dtype=object)
    diff = p.astype(np.float64) - q.astype(np.float64)
    return np.einsum("ij,ij->i", diff, diff)


def _nearest(query, points: np.ndarray, ids: Sequence[VectorRef], count: int) -> list[VectorRef]:
    d = sq_dists(query, points)
    order = sorted(range(len(ids)), key=lambda i: (d[i], ids[i]))
    return [ids[i] for i in order[:count]]


def build_index(vectors, refs: Sequence[VectorRef], C: int | None = None, L: int = 1,
                alpha: int = 1, seed: int = 0, owner: str | None = None) -> ClusterIndex:
    """Build a cluster-pruning index over plaintext vectors.

    ``C`` defaults to ceil(sqrt(N)). Level j above the bottom holds a random
    subset of about C^((L-j)/L) nodes of the level below; each node points at
    its nearest parent. Non-leader vectors descend the tree keeping the alpha
    best candidates per level and attach to their alpha nearest leaders.
    """
    x = np.asarray(vectors)
    refs = list(refs)
    n = len(refs)
    if x.shape[0] != n:
        raise ValueError("vectors and refs differ in length")
    if n == 0:
        return ClusterIndex(C=0, L=L, alpha=alpha)
    C = default_num_clusters(n) if C is None else C
    if not 1 <= C <= n:
        raise InsufficientDataError(f"C={C} must be between 1 and N={n}")
    if L < 1 or alpha < 1:
        raise ValueError("L and alpha must be positive")
    rng = np.random.default_rng(seed)
    leader_idx = np.sort(rng.choice(n, size=C, replace=False))
    pos = {r: i for i, r in enumerate(refs)}

    levels = [[refs[i] for i in leader_idx]]
    for j in range(1, L):
        size = max(1, round(C ** ((L - j) / L)))
        below = levels[-1]
        size = min(size, len(below))
        pick = np.sort(rng.choice(len(below), size=size, replace=False))
        levels.append([below[i] for i in pick])
    parents: dict[VectorRef, VectorRef] = {}
    for j in range(len(levels) - 1):
        upper = levels[j + 1]
        upper_x = x[[pos[r] for r in upper]]
        for node in levels[j]:
            parents[node] = _nearest(x[pos[node]], upper_x, upper, 1)[0]

    clusters = {r: [r] for r in levels[0]}
    idx = ClusterIndex(clusters=clusters, levels=levels, parents=parents, C=C, L=L, alpha=alpha)
    leader_set = set(levels[0])
    for i, r in enumerate(refs):
        if r not in leader_set:
            for lead in _route(idx, x[i], lambda ref: x[pos[ref]], alpha):
                clusters[lead].append(r)
    if owner is not None:
        idx.owners = {lead: owner for lead in clusters}
    else:
        idx.owners = {lead: lead.owner_id for lead in clusters}
    return idx


def _route(idx: ClusterIndex, vec, lookup, alpha: int) -> list[VectorRef]:
    """Descend the representative tree and return the alpha nearest leaders."""
    candidates = idx.levels[-1]
    for j in range(len(idx.levels) - 1, 0, -1):
        best = _nearest(vec, np.array([lookup(r) for r in candidates]), candidates, alpha)
        best_set = set(best)
        candidates = [r for r in idx.levels[j - 1] if idx.parents[r] in best_set]
    alpha = min(alpha, len(candidates))
    return _nearest(vec, np.array([lookup(r) for r in candidates]), candidates, alpha)


def attach(idx: ClusterIndex, vectors, refs: Sequence[VectorRef], leader_vectors: dict) -> ClusterIndex:
    """Incrementally attach new vectors to the existing nearest leaders.

    ``leader_vectors`` maps every tree node to its plaintext vector and is
    only available to the owner. Returns a new index; ``idx`` is untouched.
    """
    out = replace(idx, clusters={k: list(v) for k, v in idx.clusters.items()})
    for vec, r in zip(np.asarray(vectors), refs):
        for lead in _route(out, vec, leader_vectors.__getitem__, out.alpha):
            out.clusters[lead].append(r)
    return out


def merge(global_idx: ClusterIndex, incoming: ClusterIndex, owner: str) -> ClusterIndex:
    """Disjoint union of two indices; ``incoming`` leaders are labelled ``owner``."""
    clash = set(global_idx.clusters) & set(incoming.clusters)
    if clash:
        raise ValueError(f"leaders already present: {sorted(clash)[:3]}")
    clusters = {k: list(v) for k, v in global_idx.clusters.items()}
    owners = dict(global_idx.owners)
    for lead, mem in incoming.clusters.items():
        clusters[lead] = list(mem)
        owners[lead] = owner
    depth = max(len(global_idx.levels), len(incoming.levels))
    levels = []
    for j in range(depth):
        row = []
        if j < len(global_idx.levels):
            row += global_idx.levels[j]
        if j < len(incoming.levels):
            row += incoming.levels[j]
        levels.append(row)
    parents = {**global_idx.parents, **incoming.parents}
    return ClusterIndex(clusters=clusters, owners=owners, levels=levels, parents=parents,
                        C=global_idx.C + incoming.C, L=max(global_idx.L, incoming.L),
                        alpha=max(global_idx.alpha, incoming.alpha))


def restrict(idx: ClusterIndex, owners: Iterable[str]) -> ClusterIndex:
    keep = set(owners)
    clusters = {k: list(v) for k, v in idx.clusters.items() if idx.owners[k] in keep}
    return ClusterIndex(clusters=clusters, owners={k: idx.owners[k] for k in clusters},
                        levels=[[r for r in lvl if r.owner_id in keep] for lvl in idx.levels],
                        parents={k: v for k, v in idx.parents.items() if k.owner_id in keep},
                        C=len(clusters), L=idx.L, alpha=idx.alpha)


def leaders(idx: ClusterIndex, owner_filter: Iterable[str]) -> list[VectorRef]:
    keep = set(owner_filter)
    return sorted(lead for lead in idx.clusters if idx.owners[lead] in keep)


def members(idx: ClusterIndex, leader_id: VectorRef) -> list[VectorRef]:
    return list(idx.clusters[leader_id])


def probe_set(idx: ClusterIndex, ranked_leaders: Sequence[VectorRef], beta: int) -> list[VectorRef]:
    return [r for r in ranked_leaders if r in idx.clusters][:beta]


def brute_force_knn(query, vectors, k: int) -> list[tuple[int, object]]:
    """Exact k nearest (index, squared distance); ties by insertion order."""
    vectors = np.asarray(vectors)
    if len(vectors) == 0:
        return []
    d = sq_dists(query, vectors)
    order = sorted(range(len(d)), key=lambda i: (d[i], i))
    return [(i, d[i]) for i in order[:k]]


def search(idx: ClusterIndex, query, lookup, k: int, beta: int = 1,
           owners: Iterable[str] | None = None) -> list[tuple[VectorRef, object]]:
    """Plaintext pruned k-NN: rank leaders, probe beta clusters, scan members.

    ``lookup`` maps a VectorRef to its plaintext vector.
    """
    pool = sorted(idx.clusters) if owners is None else leaders(idx, owners)
    if not pool:
        return []
    d_lead = sq_dists(query, np.array([lookup(r) for r in pool]))
    ranked = [pool[i] for i in sorted(range(len(pool)), key=lambda i: (d_lead[i], pool[i]))]
    cand = sorted({m for lead in probe_set(idx, ranked, beta) for m in idx.clusters[lead]})
    d = sq_dists(query, np.array([lookup(r) for r in cand]))
    order = sorted(range(len(cand)), key=lambda i: (d[i], cand[i]))
    return [(cand[i], d[i]) for i in order[:k]]


# -- persistence ------------------------------------------------------------

def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack(">H", len(b)) + b


def _pack_ref(r: VectorRef) -> bytes:
    return _pack_str(r.owner_id) + _pack_str(r.image_id) + struct.pack(">I", r.ordinal)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise MalformedFileError("truncated index file")
        out = self.data[self.off:self.off + n]
        self.off += n
        return out

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u16()).decode("utf-8")

    def ref(self) -> VectorRef:
        return VectorRef(self.string(), self.string(), self.u32())


def dump_index(idx: ClusterIndex) -> bytes:
    """Binary form: header, leader table, per-cluster member lists, tree."""
    out = [INDEX_MAGIC, struct.pack(">BIII", INDEX_VERSION, idx.C, idx.L, idx.alpha)]
    leaders_sorted = sorted(idx.clusters)
    out.append(struct.pack(">I", len(leaders_sorted)))
    for lead in leaders_sorted:
        out.append(_pack_ref(lead) + _pack_str(idx.owners[lead]))
    for lead in leaders_sorted:
        mem = idx.clusters[lead]
        out.append(struct.pack(">I", len(mem)))
        out.extend(_pack_ref(m) for m in mem)
    out.append(struct.pack(">I", len(idx.levels)))
    for lvl in idx.levels:
        out.append(struct.pack(">I", len(lvl)))
        out.extend(_pack_ref(r) for r in lvl)
    out.append(struct.pack(">I", len(idx.parents)))
    for child in sorted(idx.parents):
        out.append(_pack_ref(child) + _pack_ref(idx.parents[child]))
    return b"".join(out)


def load_index(data: bytes) -> ClusterIndex:
    rd = _Reader(data)
    if rd.take(4) != INDEX_MAGIC:
        raise MalformedFileError("not a PICX index")
    version, C, L, alpha = struct.unpack(">BIII", rd.take(13))
    if version != INDEX_VERSION:
        raise MalformedFileError(f"unsupported index version {version}")
    owners = {}
    order = []
    for _ in range(rd.u32()):
        lead = rd.ref()
        owners[lead] = rd.string()
        order.append(lead)
    clusters = {lead: [rd.ref() for _ in range(rd.u32())] for lead in order}
    levels = [[rd.ref() for _ in range(rd.u32())] for _ in range(rd.u32())]
    parents = {}
    for _ in range(rd.u32()):
        child = rd.ref()
        parents[child] = rd.ref()
    if rd.off != len(data):
        raise MalformedFileError("trailing bytes after index")
    return ClusterIndex(clusters=clusters, owners=owners, levels=levels, parents=parents,
                        C=C, L=L, alpha=alpha)


def index_to_json(idx: ClusterIndex) -> str:
    return json.dumps({
        "C": idx.C, "L": idx.L, "alpha": idx.alpha,
        "clusters": [
            {"leader": lead.locator, "owner": idx.owners[lead],
             "members": [m.locator for m in idx.clusters[lead]]}
            for lead in sorted(idx.clusters)
        ],
        "levels": [[r.locator for r in lvl] for lvl in idx.levels],
    }, indent=2)
