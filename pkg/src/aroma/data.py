"""Labeled sparse corpora: file format, tf-idf, information-gain selection and
seeded triplet sampling.

Corpus files are UTF-8 text. The first non-comment line is ``dim <d>``; every
following line is ``<id> <label> <idx>:<value> ...`` with 0-based, strictly
increasing indices. Lines starting with ``#`` are comments.
"""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Optional

import numpy as np

from .linalg import SparseVector, Triplet

MAX_QUERY_RETRIES = 1000


class CorpusFormatError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class Example:
    id: str
    label: str
    features: SparseVector


@dataclass
class LabeledCorpus:
    dim: int
    examples: list[Example] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for ex in self.examples:
            if ex.id in seen:
                raise ValueError(f"duplicate example id {ex.id!r}")
            if ex.features.dim != self.dim:
                raise ValueError(f"example {ex.id!r} has dim {ex.features.dim}, corpus dim is {self.dim}")
            seen.add(ex.id)

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def labels(self) -> list[str]:
        return [ex.label for ex in self.examples]

    def dense(self) -> np.ndarray:
        X = np.zeros((len(self.examples), self.dim))
        for row, ex in enumerate(self.examples):
            X[row, ex.features.indices] = ex.features.values
        return X


def parse_corpus(lines: Iterable[str]) -> LabeledCorpus:
    dim: Optional[int] = None
    examples: list[Example] = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if dim is None:
            if len(tokens) != 2 or tokens[0] != "dim":
                raise CorpusFormatError(lineno, f"expected 'dim <d>' header, got {line!r}")
            try:
                dim = int(tokens[1])
            except ValueError:
                raise CorpusFormatError(lineno, f"bad dimension {tokens[1]!r}") from None
            if dim <= 0:
                raise CorpusFormatError(lineno, f"dimension must be positive, got {dim}")
            continue
        if len(tokens) < 2:
            raise CorpusFormatError(lineno, "expected '<id> <label> [idx:value ...]'")
        ex_id, label = tokens[0], tokens[1]
        if ex_id in seen:
            raise CorpusFormatError(lineno, f"duplicate id {ex_id!r} (first seen on line {seen[ex_id]})")
        idx, val = [], []
        for tok in tokens[2:]:
            k, sep, v = tok.partition(":")
            if not sep:
                raise CorpusFormatError(lineno, f"malformed feature {tok!r}")
            try:
                k_i, v_f = int(k), float(v)
            except ValueError:
                raise CorpusFormatError(lineno, f"malformed feature {tok!r}") from None
            if not math.isfinite(v_f):
                raise CorpusFormatError(lineno, f"non-finite value in {tok!r}")
            if k_i < 0 or k_i >= dim:
                raise CorpusFormatError(lineno, f"index {k_i} out of range for dim {dim}")
            if idx and k_i <= idx[-1]:
                raise CorpusFormatError(lineno, f"indices not strictly increasing at {tok!r}")
            idx.append(k_i)
            val.append(v_f)
        seen[ex_id] = lineno
        examples.append(Example(ex_id, label, SparseVector(dim, idx, val)))
    if dim is None:
        return LabeledCorpus(1, [])
    return LabeledCorpus(dim, examples)


def format_corpus(corpus: LabeledCorpus) -> str:
    out = [f"dim {corpus.dim}"]
    for ex in corpus.examples:
        feats = " ".join(f"{i}:{v!r}" for i, v in zip(ex.features.indices.tolist(), ex.features.values.tolist()))
        out.append(f"{ex.id} {ex.label} {feats}".rstrip())
    return "\n".join(out) + "\n"


def write_corpus(corpus: LabeledCorpus, fh: IO[str]) -> None:
    fh.write(format_corpus(corpus))


def read_corpus(path) -> LabeledCorpus:
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh)


def tfidf_transform(corpus: LabeledCorpus) -> LabeledCorpus:
    """Raw-count tf times ``ln(N / df)``, then l2 normalization per document.

    Terms present in every document get weight zero and drop out; a document
    left with no weight stays the zero vector.
    """
    N = len(corpus)
    df = np.zeros(corpus.dim)
    for ex in corpus.examples:
        df[ex.features.indices] += 1
    with np.errstate(divide="ignore"):
        idf = np.where(df > 0, np.log(N / np.maximum(df, 1)), 0.0)
    out = []
    for ex in corpus.examples:
        f = ex.features
        w = f.values * idf[f.indices]
        norm = math.sqrt(float(w @ w))
        if norm > 0:
            w = w / norm
        out.append(Example(ex.id, ex.label, SparseVector(corpus.dim, f.indices, w)))
    return LabeledCorpus(corpus.dim, out)


def _entropy(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        return 0.0
    probs = counts[counts > 0] / total
    return float(-(probs * np.log(probs)).sum())


def information_gain(corpus: LabeledCorpus) -> np.ndarray:
    """Class-entropy reduction (nats) from the presence or absence of each feature."""
    N = len(corpus)
    if N == 0:
        return np.zeros(corpus.dim)
    classes = sorted(set(corpus.labels))
    cls_index = {c: i for i, c in enumerate(classes)}
    present = np.zeros((corpus.dim, len(classes)))
    totals = np.zeros(len(classes))
    for ex in corpus.examples:
        c = cls_index[ex.label]
        totals[c] += 1
        present[ex.features.indices, c] += 1
    h = _entropy(totals)
    gains = np.empty(corpus.dim)
    for t in range(corpus.dim):
        with_t = present[t]
        without_t = totals - with_t
        n_t = with_t.sum()
        cond = (n_t / N) * _entropy(with_t) + ((N - n_t) / N) * _entropy(without_t)
        gains[t] = h - cond
    # float slack can leave tiny negatives for uninformative features
    return np.clip(gains, 0.0, h)


def infogain_select(corpus: LabeledCorpus, k: int) -> tuple[LabeledCorpus, list[int]]:
    """Keep the ``k`` features with the highest information gain.

    Ties go to the lower original index. The kept features are renumbered
    ``0..k-1`` in their original order; the returned map lists the original
    index of each new one.
    """
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if k > corpus.dim:
        raise ValueError(f"k={k} exceeds corpus dimension {corpus.dim}")
    gains = information_gain(corpus)
    order = sorted(range(corpus.dim), key=lambda t: (-gains[t], t))
    keep = sorted(order[:k])
    remap = np.full(corpus.dim, -1, dtype=np.int64)
    remap[keep] = np.arange(k)
    out = []
    for ex in corpus.examples:
        f = ex.features
        new_idx = remap[f.indices]
        mask = new_idx >= 0
        out.append(Example(ex.id, ex.label, SparseVector(k, new_idx[mask], f.values[mask])))
    return LabeledCorpus(k, out), keep


@dataclass
class TripletStream:
    """Reproducible triplet sampler.

    Draws per triplet, in this order: the query (uniform over ``queries``),
    ``p_plus`` (uniform over same-label objects, excluding the query itself when
    both sides are the same corpus) and ``p_minus`` (uniform over objects with a
    different label). Queries whose label cannot produce a valid triplet are
    redrawn.
    """

    seed: int
    queries: LabeledCorpus
    objects: Optional[LabeledCorpus] = None
    count: Optional[int] = None

    def __iter__(self) -> Iterator[Triplet]:
        return sample_triplets(self)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def sample_triplets(stream: TripletStream) -> Iterator[Triplet]:
    queries = stream.queries
    objects = stream.objects if stream.objects is not None else queries
    shared = objects is queries
    if len(queries) == 0 or len(objects) == 0:
        raise ValueError("cannot sample triplets from an empty corpus")
    by_label: dict[str, list[int]] = defaultdict(list)
    for j, ex in enumerate(objects.examples):
        by_label[ex.label].append(j)
    n_obj = len(objects)
    rng = make_rng(stream.seed)
    produced = 0
    while stream.count is None or produced < stream.count:
        for _ in range(MAX_QUERY_RETRIES):
            qi = int(rng.integers(len(queries)))
            q = queries.examples[qi]
            same = by_label.get(q.label, [])
            n_pos = len(same) - (1 if shared else 0)
            n_neg = n_obj - len(same)
            if n_pos > 0 and n_neg > 0:
                break
        else:
            raise ValueError(
                f"no query with both a same-label and a different-label object after {MAX_QUERY_RETRIES} draws"
            )
        j = int(rng.integers(n_pos))
        if shared and j >= same.index(qi):
            j += 1  # skip the query itself
        pos = same[j]
        neg_rank = int(rng.integers(n_neg))
        neg = _nth_outside(by_label, q.label, neg_rank, n_obj)
        yield Triplet(q.features, objects.examples[pos].features, objects.examples[neg].features)
        produced += 1


def _nth_outside(by_label: dict[str, list[int]], label: str, rank: int, n: int) -> int:
    """The ``rank``-th (0-based) object index whose label differs from ``label``."""
    excluded = by_label.get(label, [])
    # excluded is sorted; walk the gaps
    lo = 0
    for e in excluded:
        gap = e - lo
        if rank < gap:
            return lo + rank
        rank -= gap
        lo = e + 1
    return lo + rank


def label_counts(corpus: LabeledCorpus) -> Counter:
    return Counter(corpus.labels)
