"""Plaintext replica of the search pipeline.

Uses the same client-side preparation (seeds, fixed-point encodings,
indices, vocabularies) as the encrypted system, but computes every distance
directly on integers. Ranked outputs of the two pipelines must be identical.
"""
from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Sequence

import numpy as np

from ..access import AccessTree, evaluate, hash_attributes, parse_policy
from ..config import SystemConfig
from ..descriptor import ImageDescriptor, Vocabulary
from ..errors import ProtocolError
from ..parallel import DistRecord, threshold_select
from . import prep


def _exact(a: np.ndarray, b: np.ndarray, kernel: str) -> int:
    xs = [int(v) for v in a]
    ys = [int(v) for v in b]
    if kernel == "distance":
        return sum((x - y) * (x - y) for x, y in zip(xs, ys))
    return sum(x * y for x, y in zip(xs, ys))


class PlainPipeline:
    def __init__(self, config: SystemConfig):
        self.config = config
        self.policies: dict[str, AccessTree | None] = {}
        self.basic: dict[str, prep.BasicUpload] = {}
        self.advanced: dict[str, prep.AdvancedUpload] = {}
        self.uploads: dict[str, int] = defaultdict(int)

    def register(self, user: str, policy: str | AccessTree | None = None) -> None:
        self.policies[user] = parse_policy(policy) if isinstance(policy, str) else policy

    def upload_basic(self, user: str, images: Sequence[ImageDescriptor], seed: int | None = None) -> None:
        if not images:
            return
        if seed is None:
            seed = prep.upload_seed(self.config, user, self.uploads[user])
        if user in self.basic:
            self.basic[user] = prep.extend_basic(self.basic[user], user, images, self.config)
        else:
            self.basic[user] = prep.prepare_basic(user, images, self.config, seed)
        self.uploads[user] += 1

    def upload_advanced(self, user: str, images: Sequence[ImageDescriptor], seed: int | None = None,
                        vocab: Vocabulary | None = None) -> None:
        if not images:
            return
        if seed is None:
            seed = prep.upload_seed(self.config, user, self.uploads[user])
        self.advanced[user] = prep.prepare_advanced(user, images, self.config, seed, vocab)
        self.uploads[user] += 1

    def _permitted(self, attrs, corpus: dict) -> list[str]:
        attrs = list(attrs)
        hashed = frozenset(attrs) if all(isinstance(a, bytes) for a in attrs) else hash_attributes(attrs)
        return sorted(o for o, t in self.policies.items()
                      if t is not None and o in corpus and evaluate(t, hashed))

    def _bad(self, value: int) -> int:
        return value if self.config.kernel == "distance" else -value

    def search_basic(self, query_vectors, attrs: Iterable, k_nn: int | None = None,
                     beta: int | None = None) -> list[tuple[str, str, int]]:
        k_nn = k_nn or self.config.k_nn
        beta = beta or self.config.beta
        owners = self._permitted(attrs, self.basic)
        if not owners:
            return []
        vec = {}
        clusters = {}
        for o in owners:
            up = self.basic[o]
            vec.update(zip(up.refs, up.raws))
            clusters.update(up.index.clusters)
        leaders = sorted(clusters)
        kern = self.config.kernel
        scores: dict[tuple[str, str], int] = defaultdict(int)
        for q in prep.query_raws_basic(query_vectors, self.config):
            ranked = sorted(leaders, key=lambda r: (self._bad(_exact(q, vec[r], kern)), r))
            chosen: set = set()
            for pos, lead in enumerate(ranked):
                if pos >= beta and len(chosen) >= k_nn:
                    break
                chosen.update(clusters[lead])
            nearest = sorted(chosen, key=lambda r: (self._bad(_exact(q, vec[r], kern)), r))[:k_nn]
            for r in nearest:
                scores[(r.owner_id, r.image_id)] += 1
        return sorted(((o, i, s) for (o, i), s in scores.items()), key=lambda t: (-t[2], t[0], t[1]))

    def search_advanced(self, query_vectors, attrs: Iterable, theta: float | None = None,
                        theta_prime: float | None = None, k_nn: int | None = None,
                        beta: int | None = None) -> list[tuple[str, str, int]]:
        k_nn = k_nn or self.config.k_nn
        beta = beta or self.config.beta
        kern = self.config.kernel
        owners = self._permitted(attrs, self.advanced)
        if not owners:
            return []
        qv, vec, clusters = {}, {}, {}
        for o in owners:
            up = self.advanced[o]
            qv[o] = prep.query_raw_advanced(query_vectors, up.vocab, up.stats, self.config)
            vec.update(zip(up.refs, up.raws))
            clusters.update(up.index.clusters)

        def record(ref):
            return DistRecord(ref, value=_exact(qv[ref.owner_id], vec[ref], kern))

        lead_recs = [record(r) for r in sorted(clusters)]
        chosen, _ = threshold_select(lead_recs, beta, prep.to_badness_threshold(theta, self.config), kern)
        taken = [r.ref for r in chosen]
        rest = sorted((r for r in lead_recs if r.ref not in set(taken)),
                      key=lambda r: (self._bad(r.value), r.ref))
        ranked = taken + [r.ref for r in rest]
        members: set = set()
        for pos, lead in enumerate(ranked):
            if pos >= len(taken) and len(members) >= k_nn:
                break
            members.update(clusters[lead])
        recs = [record(r) for r in sorted(members)]
        kept, _ = threshold_select(recs, k_nn, prep.to_badness_threshold(theta_prime, self.config), kern)
        return [(r.ref.owner_id, r.ref.image_id, r.value) for r in kept]

    def search(self, query_vectors, attrs, **kw):
        if self.config.scheme == "basic":
            kw.pop("theta", None)
            kw.pop("theta_prime", None)
            return self.search_basic(query_vectors, attrs, **kw)
        return self.search_advanced(query_vectors, attrs, **kw)
