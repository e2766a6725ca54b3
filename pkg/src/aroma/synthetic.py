"""Synthetic data with a known ground-truth similarity matrix.

``retrieval_task`` draws a latent ``z ~ N(0, I)`` per example and labels it by
``argmax_j z^T V* a_j`` over random class anchors ``a_j``. The observed
features are a fixed anisotropic mixing of ``z``, l2-normalized, so ranking
well means learning both the label structure and the feature correlations.

``separable_stream`` yields triplets ordered by a ground-truth ``V*`` with a
minimum score gap, for mistake-bound checks.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .data import Example, LabeledCorpus, make_rng
from .linalg import SparseVector, Triplet, bilinear_score


@dataclass
class RetrievalTask:
    train: LabeledCorpus
    test: LabeledCorpus
    V: np.ndarray
    mixing: np.ndarray


def retrieval_task(
    dim: int = 20,
    n_classes: int = 5,
    n_train: int = 1000,
    n_test: int = 1000,
    seed: int = 0,
    decay: float = 0.3,
) -> RetrievalTask:
    """Train/test corpora labeled through a random ``V*`` (dim x dim).

    ``decay`` sets the smallest singular value of the feature mixing (the
    largest is 1); ``decay=1`` gives isotropic features.
    """
    rng = make_rng(seed)
    V = rng.normal(size=(dim, dim))
    anchors = rng.normal(size=(dim, n_classes))
    basis, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    scales = decay ** (np.arange(dim) / max(dim - 1, 1))
    mixing = basis * scales

    def corpus(size: int, prefix: str) -> LabeledCorpus:
        Z = rng.normal(size=(size, dim))
        labels = np.argmax(Z @ V @ anchors, axis=1)
        X = Z @ mixing.T
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        width = len(str(size))
        return LabeledCorpus(
            dim,
            [
                Example(f"{prefix}{i:0{width}d}", f"c{labels[i]}", SparseVector.from_dense(X[i]))
                for i in range(size)
            ],
        )

    return RetrievalTask(corpus(n_train, "tr"), corpus(n_test, "te"), V, mixing)


def random_sparse(rng: np.random.Generator, dim: int, density: float = 0.5) -> SparseVector:
    x = rng.normal(size=dim) * (rng.random(dim) < density)
    return SparseVector.from_dense(x)


def random_stream(rng: np.random.Generator, m: int, n: int, length: int, density: float = 0.5) -> list[Triplet]:
    return [
        Triplet(random_sparse(rng, m, density), random_sparse(rng, n, density), random_sparse(rng, n, density))
        for _ in range(length)
    ]


def separable_stream(V: np.ndarray, length: int, seed: int = 0, gap: float = 0.1) -> Iterator[Triplet]:
    """Dense Gaussian triplets ordered so that ``q^T V (p+ - p-) >= gap``."""
    m, n = V.shape
    rng = make_rng(seed)
    produced = 0
    while produced < length:
        q = SparseVector.from_dense(rng.normal(size=m))
        a = SparseVector.from_dense(rng.normal(size=n))
        b = SparseVector.from_dense(rng.normal(size=n))
        s = bilinear_score(q, V, a - b)
        if abs(s) < gap:
            continue
        yield Triplet(q, a, b) if s > 0 else Triplet(q, b, a)
        produced += 1
