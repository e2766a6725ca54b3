"""d-AROMA: bilinear similarity learning with an elementwise confidence matrix.

The model keeps a mean ``W`` and a same-shaped matrix ``Sigma`` of per-entry
variances. A round with query ``q`` and object difference ``p`` touches only
the ``nnz(q) x nnz(p)`` block of both matrices.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .linalg import DimensionError, SparseVector, Triplet, as_matrix, bilinear_score
from .trace import RunTrace, Sink, StepRecord

UPDATE_MODES = ("margin", "mistake")


@dataclass(frozen=True)
class DiagonalModel:
    W: np.ndarray
    Sigma: np.ndarray
    r: float

    variant = "d-aroma"

    @property
    def shape(self) -> tuple[int, int]:
        return self.W.shape

    def copy(self) -> "DiagonalModel":
        return DiagonalModel(self.W.copy(), self.Sigma.copy(), self.r)


def init_diagonal(m: int, n: int, r: float, sigma0: float = 1.0) -> DiagonalModel:
    """Zero mean, constant variance ``sigma0`` (all ones by default)."""
    if r <= 0:
        raise ValueError(f"r must be positive, got {r}")
    if sigma0 <= 0:
        raise ValueError(f"sigma0 must be positive, got {sigma0}")
    return DiagonalModel(np.zeros((m, n)), np.full((m, n), float(sigma0)), float(r))


def make_diagonal(W, Sigma, r: float) -> DiagonalModel:
    W = as_matrix(W, "W")
    Sigma = as_matrix(Sigma, "Sigma")
    if Sigma.shape != W.shape:
        raise DimensionError(f"Sigma shape {Sigma.shape} does not match W shape {W.shape}")
    if np.any(Sigma <= 0):
        raise ValueError("Sigma entries must be strictly positive")
    if r <= 0:
        raise ValueError(f"r must be positive, got {r}")
    return DiagonalModel(W, Sigma, float(r))


def _check(model: DiagonalModel, t: Triplet) -> None:
    m, n = model.W.shape
    if t.q.dim != m or t.p_plus.dim != n:
        raise DimensionError(
            f"triplet dims (q={t.q.dim}, p={t.p_plus.dim}) do not match model ({m}, {n})"
        )


def _should_update(margin: float, mode: str) -> bool:
    if mode == "margin":
        return 1.0 > margin
    if mode == "mistake":
        return margin <= 0.0
    raise ValueError(f"unknown update mode {mode!r}; expected one of {UPDATE_MODES}")


def _step_inplace(W: np.ndarray, Sigma: np.ndarray, r: float, q: SparseVector, p: SparseVector, mode: str, round_: int) -> StepRecord:
    margin = bilinear_score(q, W, p)
    hinge = max(0.0, 1.0 - margin)
    mistake = margin <= 0.0
    if not _should_update(margin, mode):
        return StepRecord(round_, q, p, margin, hinge, False, mistake)
    block = np.ix_(q.indices, p.indices)
    X = np.outer(q.values, p.values)
    S = Sigma[block]
    SX = S * X
    denom = float(np.sum(X * SX)) + r
    alpha = hinge / denom
    W[block] += alpha * SX
    Sigma[block] = S - (SX * SX) / denom
    return StepRecord(round_, q, p, margin, hinge, True, mistake, denominator=denom)


def diag_step(model: DiagonalModel, t: Triplet, update_mode: str = "margin", round_: int = 0) -> tuple[DiagonalModel, StepRecord]:
    """Apply one d-AROMA round to ``t``.

    Returns the model object itself when the gate does not fire, otherwise a
    new model; the input model is never modified.
    """
    _check(model, t)
    p = t.p
    margin = bilinear_score(t.q, model.W, p)
    if not _should_update(margin, update_mode):
        rec = StepRecord(round_, t.q, p, margin, max(0.0, 1.0 - margin), False, margin <= 0.0)
        return model, rec
    new = model.copy()
    rec = _step_inplace(new.W, new.Sigma, new.r, t.q, p, update_mode, round_)
    return new, rec


def diag_train(
    model: DiagonalModel,
    stream: Iterable[Triplet],
    update_mode: str = "margin",
    sink: Optional[Sink] = None,
    keep_records: bool = True,
) -> tuple[DiagonalModel, RunTrace]:
    """Run d-AROMA over ``stream`` starting from ``model``.

    ``sink`` receives every round record as it is produced. Errors are re-raised
    with the offending round index.
    """
    if update_mode not in UPDATE_MODES:
        raise ValueError(f"unknown update mode {update_mode!r}; expected one of {UPDATE_MODES}")
    m, n = model.W.shape
    trace = RunTrace(model.variant, m, n, model.r)
    W, Sigma = model.W.copy(), model.Sigma.copy()
    for i, t in enumerate(stream, 1):
        try:
            if t.q.dim != m or t.p_plus.dim != n:
                raise DimensionError(
                    f"triplet dims (q={t.q.dim}, p={t.p_plus.dim}) do not match model ({m}, {n})"
                )
            rec = _step_inplace(W, Sigma, model.r, t.q, t.p, update_mode, i)
        except (ValueError, ArithmeticError) as exc:
            raise type(exc)(f"round {i}: {exc}") from exc
        if keep_records:
            trace.append(rec)
        if sink is not None:
            sink(rec)
    trace.final = {"Sigma": Sigma.copy()}
    return DiagonalModel(W, Sigma, model.r), trace
