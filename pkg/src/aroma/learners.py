"""Uniform stateful wrappers around every learner, plus the two baselines.

``identity`` scores with ``W = I`` (plain dot product) and never trains.
``pa`` is a passive-aggressive bilinear learner: on a positive hinge it adds
``tau * q p^T`` with ``tau = min(C, hinge / (||q||^2 ||p||^2))``.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from . import arow
from .diagonal import DiagonalModel, _step_inplace, init_diagonal
from .factored import FactoredModel, _apply, init_factored
from .linalg import DimensionError, SparseVector, Triplet, bilinear_score
from .trace import RunTrace, Sink, StepRecord

ALGOS = ("d-aroma", "f-aroma", "f-aroma-analysis", "arow-vec", "pa", "identity")
DEFAULT_PA_C = 0.1
# arow-vec keeps an (mn x mn) covariance
AROW_VEC_MAX_DIM = 4096


class BaseLearner:
    variant = "base"

    def __init__(self, m: int, n: int, r: float):
        self.m, self.n, self.r = int(m), int(n), float(r)
        self.rounds = 0

    def _check(self, t: Triplet) -> None:
        if t.q.dim != self.m or t.p_plus.dim != self.n:
            raise DimensionError(
                f"triplet dims (q={t.q.dim}, p={t.p_plus.dim}) do not match model ({self.m}, {self.n})"
            )

    def step(self, t: Triplet) -> StepRecord:
        self._check(t)
        self.rounds += 1
        return self._step(t.q, t.p, self.rounds)

    def _step(self, q: SparseVector, p: SparseVector, i: int) -> StepRecord:
        raise NotImplementedError

    def state(self) -> dict[str, np.ndarray]:
        """Matrices saved alongside ``W`` in the model file."""
        return {}

    def final(self) -> dict[str, np.ndarray]:
        """Covariance snapshot closing a run trace."""
        return {}

    def train(self, stream, sink: Optional[Sink] = None, keep_records: bool = True) -> RunTrace:
        trace = RunTrace(self.variant, self.m, self.n, self.r)
        for t in stream:
            try:
                rec = self.step(t)
            except (ValueError, ArithmeticError) as exc:
                raise type(exc)(f"round {self.rounds}: {exc}") from exc
            if keep_records:
                trace.append(rec)
            if sink is not None:
                sink(rec)
        trace.final = self.final()
        return trace


class DiagonalLearner(BaseLearner):
    variant = "d-aroma"

    def __init__(self, m: int, n: int, r: float, update_mode: str = "margin"):
        super().__init__(m, n, r)
        model = init_diagonal(m, n, r)
        self.W, self.Sigma = model.W, model.Sigma
        self.update_mode = update_mode

    def _step(self, q, p, i):
        return _step_inplace(self.W, self.Sigma, self.r, q, p, self.update_mode, i)

    @property
    def model(self) -> DiagonalModel:
        return DiagonalModel(self.W.copy(), self.Sigma.copy(), self.r)

    def state(self):
        return {"Sigma": self.Sigma}

    def final(self):
        return {"Sigma": self.Sigma.copy()}


class FactoredLearner(BaseLearner):
    def __init__(self, m: int, n: int, r: float, mode: str = "standard"):
        super().__init__(m, n, r)
        self.model: FactoredModel = init_factored(m, n, r, mode)
        self.variant = self.model.variant

    @property
    def W(self) -> np.ndarray:
        return self.model.W

    def _step(self, q, p, i):
        self.model, rec = _apply(self.model, q, p, i)
        return rec

    def state(self):
        return {"Omega": self.model.Omega, "Lambda": self.model.Lambda}

    def final(self):
        return {"Omega": self.model.Omega.copy(), "Lambda": self.model.Lambda.copy()}


class ArowVecLearner(BaseLearner):
    """Full-covariance AROW on ``vec(q p^T)`` with label +1."""

    variant = "arow-vec"

    def __init__(self, m: int, n: int, r: float):
        super().__init__(m, n, r)
        if m * n > AROW_VEC_MAX_DIM:
            raise ValueError(
                f"arow-vec needs an ({m * n} x {m * n}) covariance; limit is mn <= {AROW_VEC_MAX_DIM}"
            )
        self.model = arow.init_arow(m * n, r, diagonal=False)

    @property
    def W(self) -> np.ndarray:
        return self.model.w.reshape((self.m, self.n), order="F")

    def _step(self, q, p, i):
        x = vec_outer(q, p)
        margin = float(self.model.w[x.indices] @ x.values) if x.nnz else 0.0
        self.model = arow.arow_update(self.model, x, 1)
        hinge = max(0.0, 1.0 - margin)
        return StepRecord(i, q, p, margin, hinge, hinge > 0.0, margin <= 0.0)

    def state(self):
        return {"Sigma": self.model.sigma}


class PALearner(BaseLearner):
    variant = "pa"

    def __init__(self, m: int, n: int, r: float = 1.0, C: float = DEFAULT_PA_C):
        super().__init__(m, n, r)
        if C <= 0:
            raise ValueError(f"C must be positive, got {C}")
        self.C = float(C)
        self.W = np.zeros((m, n))

    def _step(self, q, p, i):
        margin = bilinear_score(q, self.W, p)
        hinge = max(0.0, 1.0 - margin)
        norm2 = q.squared_norm() * p.squared_norm()
        if hinge == 0.0 or norm2 == 0.0:
            return StepRecord(i, q, p, margin, hinge, False, margin <= 0.0)
        tau = min(self.C, hinge / norm2)
        self.W[np.ix_(q.indices, p.indices)] += tau * np.outer(q.values, p.values)
        return StepRecord(i, q, p, margin, hinge, True, margin <= 0.0)


class IdentityLearner(BaseLearner):
    variant = "identity"

    def __init__(self, m: int, n: int, r: float = 1.0):
        super().__init__(m, n, r)
        self.W = np.eye(m, n)

    def _step(self, q, p, i):
        margin = bilinear_score(q, self.W, p)
        return StepRecord(i, q, p, margin, max(0.0, 1.0 - margin), False, margin <= 0.0)


def vec_outer(q: SparseVector, p: SparseVector) -> SparseVector:
    """``vec(q p^T)`` as a sparse vector of length ``m * n`` (column stacking)."""
    m = q.dim
    if q.nnz == 0 or p.nnz == 0:
        return SparseVector(m * p.dim)
    idx = (p.indices[:, None] * m + q.indices[None, :]).reshape(-1)
    val = (p.values[:, None] * q.values[None, :]).reshape(-1)
    return SparseVector(m * p.dim, idx, val)


def make_learner(algo: str, m: int, n: int, r: float = 1.0, update_mode: str = "margin", C: float = DEFAULT_PA_C) -> BaseLearner:
    if algo == "d-aroma":
        return DiagonalLearner(m, n, r, update_mode)
    if algo == "f-aroma":
        return FactoredLearner(m, n, r, "standard")
    if algo == "f-aroma-analysis":
        return FactoredLearner(m, n, r, "analysis")
    if algo == "arow-vec":
        return ArowVecLearner(m, n, r)
    if algo == "pa":
        return PALearner(m, n, r, C)
    if algo == "identity":
        return IdentityLearner(m, n, r)
    raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGOS}")
