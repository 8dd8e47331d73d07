"""Feature ingestion, visual vocabularies and tf-idf frequency vectors.

Descriptors arrive precomputed (SIFT-style float vectors). Files use the
INRIA ``.fvecs``/``.ivecs`` layout: each record is a little-endian int32
dimension followed by that many float32 (or int32) values. A sidecar
manifest groups record ranges into images, one ``image_id<TAB>start<TAB>count``
line per image.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, InsufficientDataError, MalformedFileError

DEFAULT_VOCAB_SIZE = 1000


@dataclass
class ImageDescriptor:
    image_id: str
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=np.float64))
        if self.vectors.shape[0] == 0:
            raise InsufficientDataError(f"image {self.image_id!r} has no vectors")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class Vocabulary:
    words: np.ndarray
    inertia_history: list[float] = field(default_factory=list)

    @property
    def v(self) -> int:
        return self.words.shape[0]

    @property
    def dim(self) -> int:
        return self.words.shape[1]


@dataclass
class CorpusStats:
    """Corpus-level counts for tf-idf: image count and per-word document frequency."""

    N: int
    doc_freq: np.ndarray
    counts: dict[str, np.ndarray] = field(default_factory=dict)

    def n_I(self, image_id: str) -> int:
        return int(self.counts[image_id].sum())


@dataclass
class FrequencyVector:
    image_id: str
    weights: np.ndarray


# -- fvecs / ivecs ----------------------------------------------------------

def _read_vecs(data: bytes, value_dtype) -> np.ndarray | list[np.ndarray]:
    out = []
    off = 0
    total = len(data)
    while off < total:
        if total - off < 4:
            raise MalformedFileError(f"truncated header at byte {off}")
        dim = int(np.frombuffer(data, dtype="<i4", count=1, offset=off)[0])
        if dim <= 0:
            raise MalformedFileError(f"record at byte {off} has dimension {dim}")
        off += 4
        if total - off < 4 * dim:
            raise MalformedFileError(f"truncated record at byte {off - 4}")
        out.append(np.frombuffer(data, dtype=value_dtype, count=dim, offset=off).copy())
        off += 4 * dim
    return out


def read_fvecs(path: str | os.PathLike) -> list[np.ndarray]:
    """All records of an fvecs file; records may differ in dimension."""
    with open(path, "rb") as f:
        return _read_vecs(f.read(), "<f4")


def read_ivecs(path: str | os.PathLike) -> list[np.ndarray]:
    with open(path, "rb") as f:
        return _read_vecs(f.read(), "<i4")


def _write_vecs(path, vectors: Iterable, dtype) -> None:
    with open(path, "wb") as f:
        for vec in vectors:
            arr = np.asarray(vec, dtype=dtype).ravel()
            if arr.size == 0:
                raise MalformedFileError("cannot write an empty record")
            f.write(np.int32(arr.size).astype("<i4").tobytes())
            f.write(arr.tobytes())


def write_fvecs(path, vectors: Iterable) -> None:
    _write_vecs(path, vectors, "<f4")


def write_ivecs(path, vectors: Iterable) -> None:
    _write_vecs(path, vectors, "<i4")


def read_manifest(path) -> list[tuple[str, int, int]]:
    entries = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise MalformedFileError(f"manifest line {lineno}: expected 3 tab-separated fields")
            try:
                entries.append((parts[0], int(parts[1]), int(parts[2])))
            except ValueError as exc:
                raise MalformedFileError(f"manifest line {lineno}: {exc}") from None
    return entries


def write_manifest(path, entries: Sequence[tuple[str, int, int]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for image_id, start, count in entries:
            f.write(f"{image_id}\t{start}\t{count}\n")


def _group(records: list[np.ndarray], manifest) -> list[ImageDescriptor]:
    if manifest is None:
        groups = [(str(i), i, 1) for i in range(len(records))]
    else:
        groups = read_manifest(manifest) if isinstance(manifest, (str, os.PathLike)) else list(manifest)
    images = []
    for image_id, start, count in groups:
        if count < 1 or start < 0 or start + count > len(records):
            raise MalformedFileError(f"manifest range for {image_id!r} is outside the file")
        chunk = records[start:start + count]
        if len({len(r) for r in chunk}) != 1:
            raise DimensionMismatch(f"image {image_id!r} mixes vector dimensions")
        images.append(ImageDescriptor(image_id, np.vstack(chunk)))
    return images


def load_vectors(path, fmt: str = "fvecs", manifest=None) -> list[ImageDescriptor]:
    """Load descriptors grouped into images.

    ``fmt`` is ``"fvecs"`` or ``"tsv"``. For tsv each line is
    ``image_id<TAB>v1 v2 ...`` and consecutive lines with the same id form one
    image, so no manifest is used. Without a manifest every fvecs record is
    its own image, named by its record index.
    """
    if fmt == "fvecs":
        return _group(read_fvecs(path), manifest)
    if fmt != "tsv":
        raise ValueError(f"unknown vector format {fmt!r}")
    order: list[str] = []
    rows: dict[str, list[np.ndarray]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise MalformedFileError(f"line {lineno}: expected image_id<TAB>values")
            try:
                vec = np.array([float(x) for x in parts[1].replace(",", " ").split()])
            except ValueError as exc:
                raise MalformedFileError(f"line {lineno}: {exc}") from None
            if vec.size == 0:
                raise MalformedFileError(f"line {lineno}: empty vector")
            if parts[0] not in rows:
                order.append(parts[0])
                rows[parts[0]] = []
            rows[parts[0]].append(vec)
    images = []
    for image_id in order:
        if len({len(r) for r in rows[image_id]}) != 1:
            raise DimensionMismatch(f"image {image_id!r} mixes vector dimensions")
        images.append(ImageDescriptor(image_id, np.vstack(rows[image_id])))
    return images


def save_vectors(path, images: Sequence[ImageDescriptor], manifest_path=None) -> None:
    entries = []
    records = []
    for img in images:
        entries.append((img.image_id, len(records), img.vectors.shape[0]))
        records.extend(img.vectors)
    write_fvecs(path, records)
    if manifest_path is not None:
        write_manifest(manifest_path, entries)


# -- vocabulary -------------------------------------------------------------

def _sq_dists(x: np.ndarray, c: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Exact pairwise squared distances, computed by differences in chunks."""
    out = np.empty((x.shape[0], c.shape[0]))
    for s in range(0, x.shape[0], chunk):
        diff = x[s:s + chunk, None, :] - c[None, :, :]
        out[s:s + chunk] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def _kmeanspp(x: np.ndarray, v: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(x.shape[0])]]
    d2 = _sq_dists(x, centers[0][None, :])[:, 0]
    for _ in range(1, v):
        total = d2.sum()
        if total <= 0:
            raise InsufficientDataError("fewer distinct vectors than vocabulary words")
        idx = rng.choice(x.shape[0], p=d2 / total)
        centers.append(x[idx])
        d2 = np.minimum(d2, _sq_dists(x, x[idx][None, :])[:, 0])
    return np.array(centers)


def build_vocabulary(vectors, v: int = DEFAULT_VOCAB_SIZE, max_iters: int = 100,
                     seed: int = 0, tol: float = 1e-6) -> Vocabulary:
    """k-means with k-means++ seeding; deterministic for a given seed.

    Stops after ``max_iters`` Lloyd steps or when no centroid moves by more
    than ``tol``. Empty clusters keep their previous centroid.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < v:
        raise InsufficientDataError(f"need at least {v} vectors, got {x.shape[0] if x.ndim == 2 else 0}")
    if v < 2:
        raise ValueError("vocabulary needs at least 2 words")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(x, v, rng)
    history = []
    for _ in range(max_iters):
        d2 = _sq_dists(x, centers)
        assign = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(x.shape[0]), assign].sum()))
        new = centers.copy()
        for k in range(v):
            members = x[assign == k]
            if len(members):
                new[k] = members.mean(axis=0)
        shift = np.max(np.linalg.norm(new - centers, axis=1))
        centers = new
        if shift < tol:
            break
    d2 = _sq_dists(x, centers)
    history.append(float(d2.min(axis=1).sum()))
    return Vocabulary(centers, history)


def save_vocabulary(path, vocab: Vocabulary) -> None:
    write_fvecs(path, vocab.words)


def load_vocabulary(path) -> Vocabulary:
    recs = read_fvecs(path)
    if len({len(r) for r in recs}) > 1:
        raise DimensionMismatch("vocabulary words differ in dimension")
    return Vocabulary(np.vstack(recs).astype(np.float64))


def quantize(desc: ImageDescriptor | np.ndarray, vocab: Vocabulary) -> np.ndarray:
    """Word counts of a descriptor; ties go to the lowest word index."""
    x = desc.vectors if isinstance(desc, ImageDescriptor) else np.atleast_2d(desc)
    if x.shape[1] != vocab.dim:
        raise DimensionMismatch(f"descriptor dim {x.shape[1]} != vocabulary dim {vocab.dim}")
    assign = np.argmin(_sq_dists(x, vocab.words), axis=1)
    return np.bincount(assign, minlength=vocab.v).astype(np.int64)


def corpus_stats(images: Sequence[ImageDescriptor], vocab: Vocabulary) -> CorpusStats:
    counts = {img.image_id: quantize(img, vocab) for img in images}
    doc_freq = np.zeros(vocab.v, dtype=np.int64)
    for c in counts.values():
        doc_freq += c > 0
    return CorpusStats(N=len(images), doc_freq=doc_freq, counts=counts)


def _idf(N: int, f: int) -> float:
    # ln(N/f) as log1p of an exact integer difference: stays accurate when f is close to N
    return math.log1p((N - f) / f)


def weight_tfidf(counts, stats: CorpusStats, image_id: str | None = None) -> FrequencyVector:
    """w_i = (f_iI / n_I) * ln(N / f_i), zero where the word is absent.

    Raises when a word occurs in the image but has zero document frequency,
    which cannot happen when the image belongs to the corpus.
    """
    counts = np.asarray(counts, dtype=np.int64)
    n_img = int(counts.sum())
    if stats.N < 1 or n_img < 1:
        raise InsufficientDataError("tf-idf needs N >= 1 and n_I >= 1")
    present = counts > 0
    if np.any(present & (stats.doc_freq == 0)):
        raise InsufficientDataError("word present in image but absent from corpus statistics")
    w = np.zeros(counts.shape, dtype=np.float64)
    for i in np.nonzero(present)[0]:
        w[i] = (counts[i] / n_img) * _idf(stats.N, int(stats.doc_freq[i]))
    return FrequencyVector(image_id or "", w)


def weight_query(counts, stats: CorpusStats) -> np.ndarray:
    """tf-idf of a query image against an owner's corpus.

    Words that no corpus image contains carry no matching information and get
    weight 0 instead of an infinite idf.
    """
    counts = np.asarray(counts, dtype=np.int64)
    n_img = int(counts.sum())
    if n_img < 1:
        raise InsufficientDataError("query has no vectors")
    w = np.zeros(counts.shape, dtype=np.float64)
    for i in np.nonzero((counts > 0) & (stats.doc_freq > 0))[0]:
        w[i] = (counts[i] / n_img) * _idf(stats.N, int(stats.doc_freq[i]))
    return w
