"""Owner- and querier-side plaintext preparation.

Everything here runs on the client before encryption, and is shared by the
encrypted pipeline and the plaintext oracle so both see identical indices,
vocabularies and fixed-point encodings.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..cluster_index import ClusterIndex, VectorRef, attach, build_index, default_num_clusters
from ..config import SystemConfig
from ..descriptor import (CorpusStats, ImageDescriptor, Vocabulary, build_vocabulary,
                          corpus_stats, quantize, weight_query, weight_tfidf)
from ..errors import DimensionMismatch, InsufficientDataError
from ..fixedpoint import encode_array


def upload_seed(config: SystemConfig, owner: str, ordinal: int) -> int:
    return (config.seed * 1_000_003 + zlib.crc32(owner.encode()) + ordinal) & 0x7FFFFFFF


def num_clusters(config: SystemConfig, n: int) -> int:
    if config.c_policy == "explicit":
        return min(config.C, n)
    return default_num_clusters(n)


@dataclass
class BasicUpload:
    refs: list[VectorRef]
    raws: np.ndarray
    index: ClusterIndex


@dataclass
class AdvancedUpload:
    vocab: Vocabulary
    stats: CorpusStats
    refs: list[VectorRef]
    raws: np.ndarray
    index: ClusterIndex


def _check_dim(images: Sequence[ImageDescriptor], config: SystemConfig) -> int:
    dims = {img.dim for img in images}
    if len(dims) != 1:
        raise DimensionMismatch(f"images mix dimensions {sorted(dims)}")
    dim = dims.pop()
    if config.dim and dim != config.dim:
        raise DimensionMismatch(f"vector dim {dim} != configured dim {config.dim}")
    return dim


def encode_images(owner: str, images: Sequence[ImageDescriptor], config: SystemConfig):
    refs, rows = [], []
    for img in images:
        for j, vec in enumerate(img.vectors):
            refs.append(VectorRef(owner, img.image_id, j))
            rows.append(vec)
    return refs, encode_array(np.vstack(rows), config.fxp)


def prepare_basic(owner: str, images: Sequence[ImageDescriptor], config: SystemConfig,
                  seed: int) -> BasicUpload:
    _check_dim(images, config)
    refs, raws = encode_images(owner, images, config)
    idx = build_index(raws, refs, C=num_clusters(config, len(refs)), L=config.L,
                      alpha=config.alpha, seed=seed, owner=owner)
    return BasicUpload(refs, raws, idx)


def extend_basic(prev: BasicUpload, owner: str, images: Sequence[ImageDescriptor],
                 config: SystemConfig) -> BasicUpload:
    """Incremental upload: new vectors join the nearest existing leaders."""
    _check_dim(images, config)
    known = {r.image_id for r in prev.refs}
    dup = [img.image_id for img in images if img.image_id in known]
    if dup:
        raise InsufficientDataError(f"images already uploaded: {dup[:3]}")
    refs, raws = encode_images(owner, images, config)
    lookup = {r: row for r, row in zip(prev.refs, prev.raws)}
    idx = attach(prev.index, raws, refs, lookup)
    return BasicUpload(prev.refs + refs, np.vstack([prev.raws, raws]), idx)


def prepare_advanced(owner: str, images: Sequence[ImageDescriptor], config: SystemConfig,
                     seed: int, vocab: Vocabulary | None = None) -> AdvancedUpload:
    _check_dim(images, config)
    if vocab is None:
        all_vecs = np.vstack([img.vectors for img in images])
        vocab = build_vocabulary(all_vecs, v=config.v, max_iters=config.kmeans_iters, seed=seed)
    stats = corpus_stats(images, vocab)
    refs = [VectorRef(owner, img.image_id, 0) for img in images]
    weights = np.vstack([weight_tfidf(stats.counts[img.image_id], stats).weights for img in images])
    raws = encode_array(weights, config.fxp)
    idx = build_index(raws, refs, C=num_clusters(config, len(refs)), L=config.L,
                      alpha=config.alpha, seed=seed, owner=owner)
    return AdvancedUpload(vocab, stats, refs, raws, idx)


def query_raws_basic(vectors, config: SystemConfig) -> np.ndarray:
    return encode_array(np.atleast_2d(np.asarray(vectors, dtype=np.float64)), config.fxp)


def query_raw_advanced(vectors, vocab: Vocabulary, stats: CorpusStats,
                       config: SystemConfig) -> np.ndarray:
    counts = quantize(np.atleast_2d(np.asarray(vectors, dtype=np.float64)), vocab)
    return encode_array(weight_query(counts, stats), config.fxp)


def to_badness_threshold(theta: float | None, config: SystemConfig) -> int | None:
    """Real-valued threshold to the scaled integer badness scale.

    Distance kernel: keep squared distances <= theta. Dot kernel: theta is a
    similarity and records with inner product >= theta are kept.
    """
    if theta is None:
        return None
    scale = 1 << (2 * config.fxp.frac_bits)
    if config.kernel == "distance":
        return int(np.floor(theta * scale))
    return -int(np.ceil(theta * scale))
