"""Ranking evaluation: precision@k, mean average precision and
precision-vs-iteration traces.

Ties in score are broken by ascending candidate id. Each query is ranked
against the rest of the evaluation corpus; the query itself is left out.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .data import LabeledCorpus
from .linalg import DimensionError, SparseVector, Triplet, bilinear_score

log = logging.getLogger(__name__)


@dataclass
class EvalReport:
    k_values: list[int]
    precision_at_k: list[float]
    mAP: float
    num_queries: int = 0
    excluded_queries: int = 0
    per_query_ap: Optional[list[float]] = field(default=None, repr=False)

    def to_csv(self) -> str:
        lines = ["k,precision"]
        lines += [f"{k},{_fmt(p)}" for k, p in zip(self.k_values, self.precision_at_k)]
        lines.append(f"mAP,{_fmt(self.mAP)}")
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return repr(float(x))


def rank_objects(W: np.ndarray, q: SparseVector, candidates: Sequence[tuple[str, SparseVector]]) -> list[str]:
    """Candidate ids sorted by descending ``q^T W p``, ties by ascending id."""
    scored = []
    for cid, p in candidates:
        scored.append((-bilinear_score(q, W, p), cid))
    scored.sort()
    return [cid for _, cid in scored]


def precision_at_k(ranking: Sequence, relevant, k: int) -> float:
    if k < 1 or k > len(ranking):
        raise ValueError(f"k={k} out of range for a ranking of length {len(ranking)}")
    relevant = set(relevant)
    return sum(1 for item in ranking[:k] if item in relevant) / k


def average_precision(ranking: Sequence, relevant) -> float:
    relevant = set(relevant)
    if not relevant:
        raise ValueError("average precision needs at least one relevant item")
    hits, total = 0, 0.0
    for rank, item in enumerate(ranking, 1):
        if item in relevant:
            hits += 1
            total += hits / rank
    return total / len(relevant)


def mean_average_precision(rankings: Sequence[Sequence], relevant_sets: Sequence) -> tuple[float, int]:
    """Mean of per-query average precision.

    Queries with an empty relevant set are skipped; the second return value
    counts them.
    """
    if len(rankings) != len(relevant_sets):
        raise ValueError("need one relevant set per ranking")
    aps, skipped = [], 0
    for ranking, relevant in zip(rankings, relevant_sets):
        if not relevant:
            skipped += 1
            continue
        aps.append(average_precision(ranking, relevant))
    if skipped:
        log.warning("%d queries without relevant candidates were excluded from mAP", skipped)
    return (float(np.mean(aps)) if aps else 0.0), skipped


def score_matrix(W: np.ndarray, queries: LabeledCorpus, objects: LabeledCorpus) -> np.ndarray:
    if W.shape != (queries.dim, objects.dim):
        raise DimensionError(
            f"model is {W.shape} but corpora have dims ({queries.dim}, {objects.dim})"
        )
    return queries.dense() @ W @ objects.dense().T


def evaluate(W: np.ndarray, corpus: LabeledCorpus, k_values: Iterable[int] = (), keep_per_query: bool = False) -> EvalReport:
    """Leave-one-out retrieval evaluation of ``W`` on a labeled corpus.

    Every example is a query; the others are ranked by score and the ones
    sharing the query's label count as relevant. Queries with no relevant
    candidate are excluded from both precision and mAP.
    """
    k_values = list(k_values)
    N = len(corpus)
    for k in k_values:
        if k < 1 or k > N - 1:
            raise ValueError(f"k={k} out of range for {N - 1} candidates per query")
    S = score_matrix(W, corpus, corpus)
    ids = np.array([ex.id for ex in corpus.examples], dtype=object)
    labels = np.array(corpus.labels, dtype=object)
    # rank of each id in ascending id order, used as the tie-breaking key
    id_order = np.empty(N, dtype=np.int64)
    id_order[np.argsort(ids.astype(str), kind="stable")] = np.arange(N)

    # integer hit counts keep precision an exact ratio
    hit_counts = np.zeros(len(k_values), dtype=np.int64)
    aps = []
    excluded = 0
    for i in range(N):
        others = np.delete(np.arange(N), i)
        rel = labels[others] == labels[i]
        if not rel.any():
            excluded += 1
            continue
        order = np.lexsort((id_order[others], -S[i, others]))
        hits = rel[order]
        cum = np.cumsum(hits)
        for j, k in enumerate(k_values):
            hit_counts[j] += cum[k - 1]
        ranks = np.flatnonzero(hits) + 1
        aps.append(float(np.mean(cum[hits] / ranks)))
    if excluded:
        log.warning("%d queries without relevant candidates were excluded", excluded)
    n_q = len(aps)
    precision = [float(h / (k * n_q)) if n_q else 0.0 for h, k in zip(hit_counts, k_values)]
    return EvalReport(
        k_values,
        precision,
        float(np.mean(aps)) if aps else 0.0,
        num_queries=n_q,
        excluded_queries=excluded,
        per_query_ap=aps if keep_per_query else None,
    )


def precision_trace(
    learner,
    stream: Iterable[Triplet],
    corpus: LabeledCorpus,
    checkpoints: Sequence[int],
    k: int = 10,
) -> list[tuple[int, float]]:
    """Precision@k on ``corpus`` after each checkpoint's number of training steps.

    ``learner`` needs a ``W`` attribute and a ``step(triplet)`` method.

    Evaluation reads a frozen copy of ``W`` and never touches the learner state.
    """
    checkpoints = list(checkpoints)
    if any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
        raise ValueError("checkpoint schedule must be strictly increasing")
    if checkpoints and checkpoints[0] < 0:
        raise ValueError("checkpoints must be non-negative")
    out: list[tuple[int, float]] = []
    it = iter(stream)
    done = 0
    for c in checkpoints:
        while done < c:
            try:
                t = next(it)
            except StopIteration:
                raise ValueError(f"stream ended after {done} triplets, before checkpoint {c}") from None
            learner.step(t)
            done += 1
        W = np.array(learner.W, copy=True)
        out.append((c, evaluate(W, corpus, [k]).precision_at_k[0]))
    return out


def format_trace_csv(rows: Sequence[tuple[int, float]], k: int) -> str:
    lines = ["iteration,k,precision"] + [f"{it},{k},{_fmt(p)}" for it, p in rows]
    return "\n".join(lines) + "\n"
