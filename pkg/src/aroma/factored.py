"""f-AROMA: bilinear similarity learning with a Kronecker-factored covariance.

The distribution over ``W`` (m x n) is matrix-variate normal with row
covariance ``Lambda`` (m x m, query side) and column covariance ``Omega``
(n x n, object side). Two gates are supported:

``standard``
    updates whenever ``q^T W p < 1`` and moves ``W`` along
    ``Lambda_{i-1} q p^T Omega_{i-1}``.
``analysis``
    mistake driven (``q^T W p <= 0``) and builds ``W`` from the *updated*
    covariances, ``W_i = Lambda_i Z_i Omega_i`` with the accumulator
    ``Z_i = Z_{i-1} + c q p^T``. This is the version the mistake bound covers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .linalg import (
    DimensionError,
    SparseVector,
    Triplet,
    as_matrix,
    bilinear_score,
    matvec,
    quadratic_form,
)
from .trace import RunTrace, Sink, StepRecord

MODES = ("standard", "analysis")


class NumericalError(ArithmeticError):
    """A covariance factor lost positive definiteness."""


@dataclass(frozen=True)
class FactoredModel:
    W: np.ndarray
    Omega: np.ndarray
    Lambda: np.ndarray
    r: float
    mode: str = "standard"
    # Lambda^{-1} W Omega^{-1}; only maintained in analysis mode
    Z: Optional[np.ndarray] = field(default=None, compare=False)

    @property
    def variant(self) -> str:
        return "f-aroma" if self.mode == "standard" else "f-aroma-analysis"

    @property
    def shape(self) -> tuple[int, int]:
        return self.W.shape

    def copy(self) -> "FactoredModel":
        Z = None if self.Z is None else self.Z.copy()
        return FactoredModel(self.W.copy(), self.Omega.copy(), self.Lambda.copy(), self.r, self.mode, Z)


def init_factored(m: int, n: int, r: float, mode: str = "standard") -> FactoredModel:
    if r <= 0:
        raise ValueError(f"r must be positive, got {r}")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    Z = np.zeros((m, n)) if mode == "analysis" else None
    return FactoredModel(np.zeros((m, n)), np.eye(n), np.eye(m), float(r), mode, Z)


def _spd_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("covariance factor is not positive definite") from exc
    return np.linalg.solve(L.T, np.linalg.solve(L, B))


def make_factored(W, Omega, Lambda, r: float, mode: str = "standard") -> FactoredModel:
    """Build a model from explicit matrices, checking shapes and definiteness."""
    W = as_matrix(W, "W")
    Omega = as_matrix(Omega, "Omega")
    Lambda = as_matrix(Lambda, "Lambda")
    m, n = W.shape
    if Omega.shape != (n, n) or Lambda.shape != (m, m):
        raise DimensionError(
            f"W is {W.shape}; need Omega ({n}, {n}) and Lambda ({m}, {m}), "
            f"got {Omega.shape} and {Lambda.shape}"
        )
    if r <= 0:
        raise ValueError(f"r must be positive, got {r}")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    Z = None
    if mode == "analysis":
        # Z = Lambda^{-1} W Omega^{-1}
        Z = _spd_solve(Omega, _spd_solve(Lambda, W).T).T
    else:
        for name, A in (("Omega", Omega), ("Lambda", Lambda)):
            try:
                np.linalg.cholesky(A)
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"{name} is not positive definite") from exc
    return FactoredModel(W, Omega, Lambda, float(r), mode, Z)


def _check(model: FactoredModel, t: Triplet) -> None:
    m, n = model.W.shape
    if t.q.dim != m or t.p_plus.dim != n:
        raise DimensionError(
            f"triplet dims (q={t.q.dim}, p={t.p_plus.dim}) do not match model ({m}, {n})"
        )


def _gate(margin: float, mode: str) -> bool:
    return 1.0 > margin if mode == "standard" else margin <= 0.0


def _downdate(A: np.ndarray, u: np.ndarray, coef: float, name: str) -> np.ndarray:
    """``A - coef * u u^T``, symmetrized; ``coef`` is 0 when there is nothing to remove."""
    if coef == 0.0:
        return A
    out = A - coef * np.outer(u, u)
    out = 0.5 * (out + out.T)
    if np.any(np.diag(out) <= 0.0) or not np.all(np.isfinite(out)):
        raise NumericalError(f"{name} lost positive definiteness after a rank-one downdate")
    return out


def _apply(model: FactoredModel, q: SparseVector, p: SparseVector, round_: int) -> tuple[FactoredModel, StepRecord]:
    W, Omega, Lambda, r = model.W, model.Omega, model.Lambda, model.r
    m, n = W.shape
    margin = bilinear_score(q, W, p)
    hinge = max(0.0, 1.0 - margin)
    mistake = margin <= 0.0
    if not _gate(margin, model.mode):
        return model, StepRecord(round_, q, p, margin, hinge, False, mistake)

    Lq = matvec(Lambda, q)
    Op = matvec(Omega, p)
    a = float(q.values @ Lq[q.indices]) if q.nnz else 0.0  # q^T Lambda q
    b = float(p.values @ Op[p.indices]) if p.nnz else 0.0  # p^T Omega p
    if a < 0.0 or b < 0.0:
        raise NumericalError(f"negative quadratic form (q: {a}, p: {b}); covariance is not PSD")
    ab = a * b
    c = hinge / (r + ab)

    Omega_new = _downdate(Omega, Op, a / (m * r + ab), "Omega")
    Lambda_new = _downdate(Lambda, Lq, b / (n * r + ab), "Lambda")

    if model.mode == "standard":
        W_new = W + c * np.outer(Lq, Op)
        Z_new = None
    else:
        Z_new = model.Z.copy()
        if q.nnz and p.nnz:
            Z_new[np.ix_(q.indices, p.indices)] += c * np.outer(q.values, p.values)
        W_new = Lambda_new @ Z_new @ Omega_new

    a_post = quadratic_form(q, Lambda_new)
    b_post = quadratic_form(p, Omega_new)
    new = FactoredModel(W_new, Omega_new, Lambda_new, r, model.mode, Z_new)
    rec = StepRecord(
        round_, q, p, margin, hinge, True, mistake,
        denominator=r + ab,
        q_form_pre=a, p_form_pre=b, q_form_post=a_post, p_form_post=b_post,
    )
    return new, rec


def factored_step(model: FactoredModel, t: Triplet, round_: int = 0) -> tuple[FactoredModel, StepRecord]:
    """One f-AROMA round; the input model is left untouched."""
    _check(model, t)
    return _apply(model, t.q, t.p, round_)


def factored_train(
    model: FactoredModel,
    stream: Iterable[Triplet],
    sink: Optional[Sink] = None,
    keep_records: bool = True,
) -> tuple[FactoredModel, RunTrace]:
    m, n = model.W.shape
    trace = RunTrace(model.variant, m, n, model.r)
    for i, t in enumerate(stream, 1):
        try:
            _check(model, t)
            model, rec = _apply(model, t.q, t.p, i)
        except (ValueError, ArithmeticError) as exc:
            raise type(exc)(f"round {i}: {exc}") from exc
        if keep_records:
            trace.append(rec)
        if sink is not None:
            sink(rec)
    trace.final = {"Omega": model.Omega.copy(), "Lambda": model.Lambda.copy()}
    return model, trace


def effective_rate_report(model: FactoredModel, t: Triplet) -> tuple[Optional[float], Optional[float]]:
    """Effective regularizers ``(m r / q^T Lambda q, n r / p^T Omega p)``.

    They play the role of AROW's ``r`` in the Omega and Lambda updates. A zero
    quadratic form means the matching covariance will not move, reported as
    ``None``.
    """
    _check(model, t)
    m, n = model.W.shape
    a = quadratic_form(t.q, model.Lambda)
    b = quadratic_form(t.p, model.Omega)
    omega_rate = m * model.r / a if a > 0 else None
    lambda_rate = n * model.r / b if b > 0 else None
    return omega_rate, lambda_rate
