"""Map/reduce-style distance evaluation with threshold selection.

Mappers (cloud side) only touch ciphertexts and emit one encrypted distance
per candidate. Reducers (key-agent side) decrypt their shard and keep records
within a threshold, so no global sort is needed; when too few records pass,
the threshold is widened by binary search.

Thresholds are "badness" values on the scaled integer kernel output: the
squared distance itself for the distance kernel, and the negated inner
product for the dot kernel, so that smaller is always better.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

from .cluster_index import VectorRef
from .encvec import EncVector, KeyTag, decrypt_scaled, phi_distance, phi_dot
from .he import Ciphertext, HEKey

MAX_STEPS = 64
OVERFETCH = 4
KERNELS = {"distance": phi_distance, "dot": phi_dot}


@dataclass(frozen=True)
class DistRecord:
    ref: VectorRef
    enc: Ciphertext | None = None
    value: int | None = None
    query: int = 0
    key_tag: KeyTag = ()


@dataclass(frozen=True)
class ThresholdState:
    theta: int
    lo: int
    hi: int
    target_k: int
    done: bool = False
    steps: int = 0


def badness(value: int, kernel: str = "distance") -> int:
    return value if kernel == "distance" else -value


def _shards(items: Sequence, count: int) -> list[Sequence]:
    count = max(1, min(count, len(items)))
    size = -(-len(items) // count)
    return [items[i:i + size] for i in range(0, len(items), size)]


def map_distances(query: EncVector, candidates: Sequence[tuple[VectorRef, EncVector]],
                  workers: int = 1, kernel: str = "distance", query_ordinal: int = 0) -> list[DistRecord]:
    """Encrypted kernel values of ``query`` against every candidate.

    The result is sorted by ref, so it does not depend on ``workers``.
    """
    fn = KERNELS[kernel]

    def run(shard):
        return [DistRecord(ref, fn(query, vec), query=query_ordinal, key_tag=query.key_tag)
                for ref, vec in shard]

    if not candidates:
        return []
    shards = _shards(list(candidates), workers)
    if len(shards) == 1:
        out = run(shards[0])
    else:
        with ThreadPoolExecutor(max_workers=len(shards)) as pool:
            out = [r for part in pool.map(run, shards) for r in part]
    return sorted(out, key=lambda r: (r.query, r.ref))


def decrypt_records(records: Sequence[DistRecord], key: HEKey, reducers: int = 1) -> list[DistRecord]:
    def run(shard):
        return [replace(r, value=decrypt_scaled(r.enc, key), enc=None) for r in shard]

    if not records:
        return []
    shards = _shards(list(records), reducers)
    if len(shards) == 1:
        out = run(shards[0])
    else:
        with ThreadPoolExecutor(max_workers=len(shards)) as pool:
            out = [r for part in pool.map(run, shards) for r in part]
    return out


def _rank_key(kernel):
    return lambda r: (badness(r.value, kernel), r.query, r.ref)


def reduce_threshold(records: Sequence[DistRecord], key: HEKey | None, theta: int | float,
                     reducers: int = 1, kernel: str = "distance") -> list[DistRecord]:
    """Decrypt (when needed) and keep records whose badness is <= theta.

    Output is sorted by (badness, query, ref) whatever the reducer count.
    """
    if records and records[0].value is None:
        if key is None:
            raise ValueError("encrypted records need a decryption key")
        records = decrypt_records(records, key, reducers)
    kept = [r for r in records if badness(r.value, kernel) <= theta]
    return sorted(kept, key=_rank_key(kernel))


def initial_state(badness_values: Sequence[int], target_k: int, theta: int | None = None) -> ThresholdState:
    """Starting window: lo = min(0, best), hi = worst, theta = 2 * best by default."""
    best, worst = min(badness_values), max(badness_values)
    lo = min(0, best)
    if theta is None:
        theta = 2 * best if best >= 0 else best
    theta = int(theta)
    hi = max(worst, theta)
    theta = max(lo, theta)
    return ThresholdState(theta=theta, lo=lo, hi=hi, target_k=target_k)


def adjust_threshold(state: ThresholdState, observed_count: int) -> ThresholdState:
    """One binary-search step on the threshold.

    Too few results: lo <- theta and theta moves halfway to hi. Enough
    results: stop, unless more than 4x the target came back, in which case hi
    <- theta and theta moves halfway down to lo. After 64 steps the window
    is abandoned and theta jumps to hi.
    """
    if state.done:
        return state
    steps = state.steps + 1
    if observed_count >= state.target_k:
        if observed_count > OVERFETCH * state.target_k and state.theta > state.lo and steps < MAX_STEPS:
            theta = state.lo + (state.theta - state.lo) // 2
            return replace(state, hi=state.theta, theta=theta, steps=steps)
        return replace(state, done=True, steps=steps)
    if state.theta >= state.hi:
        return replace(state, done=True, steps=steps)
    if steps >= MAX_STEPS:
        return replace(state, theta=state.hi, lo=state.hi, done=True, steps=steps)
    theta = state.theta + (state.hi - state.theta + 1) // 2
    return replace(state, lo=state.theta, theta=theta, steps=steps)


def threshold_select(records: Sequence[DistRecord], target_k: int, theta: int | None = None,
                     kernel: str = "distance") -> tuple[list[DistRecord], ThresholdState]:
    """Widen or tighten the threshold until at least ``target_k`` records pass.

    ``records`` must already carry decrypted values.
    """
    if not records:
        return [], ThresholdState(0, 0, 0, target_k, done=True)
    bad = [badness(r.value, kernel) for r in records]
    state = initial_state(bad, target_k, theta)
    while not state.done:
        state = adjust_threshold(state, sum(1 for b in bad if b <= state.theta))
    kept = [r for r, b in zip(records, bad) if b <= state.theta]
    return sorted(kept, key=_rank_key(kernel)), state


def k_smallest(records: Sequence[DistRecord], k: int, kernel: str = "distance") -> list[DistRecord]:
    return sorted(records, key=_rank_key(kernel))[:k]
