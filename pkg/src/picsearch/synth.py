"""Synthetic descriptor corpora for tests and demos.

Vectors are drawn around a shared set of random centres so that images from
the same centres look alike, which is enough structure for k-NN voting and
visual vocabularies to behave sensibly.
"""
from __future__ import annotations

import numpy as np

from .descriptor import ImageDescriptor


def centres(n: int, dim: int, seed: int = 0, scale: float = 100.0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0, scale, size=(n, dim))


def clustered_images(n_images: int, per_image: int, dim: int, n_centres: int = 8,
                     spread: float = 5.0, seed: int = 0, prefix: str = "img",
                     centre_seed: int | None = None) -> list[ImageDescriptor]:
    """Images whose vectors scatter around a few of ``n_centres`` shared centres."""
    rng = np.random.default_rng(seed)
    c = centres(n_centres, dim, seed if centre_seed is None else centre_seed)
    images = []
    for i in range(n_images):
        picks = rng.choice(n_centres, size=min(3, n_centres), replace=False)
        which = rng.choice(picks, size=per_image)
        vecs = c[which] + rng.normal(0, spread, size=(per_image, dim))
        images.append(ImageDescriptor(f"{prefix}{i:04d}", vecs))
    return images


def noisy_copy(img: ImageDescriptor, noise: float, seed: int = 0) -> np.ndarray:
    """Query vectors: a perturbed copy of an existing image's vectors."""
    rng = np.random.default_rng(seed)
    return img.vectors + rng.normal(0, noise, size=img.vectors.shape)
