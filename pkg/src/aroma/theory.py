"""Matrix-variate normal quantities and mistake-bound evaluators over run traces."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .factored import FactoredModel
from .linalg import DimensionError, SparseVector, bilinear_score, quadratic_form
from .trace import RunTrace

LOG_2PI = math.log(2.0 * math.pi)
BOUND_RTOL = 1e-8


def _chol(A: np.ndarray, name: str) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    if not np.allclose(A, A.T, rtol=0, atol=1e-10 * max(1.0, np.abs(A).max())):
        raise ValueError(f"{name} is not symmetric")
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} is not positive definite") from exc


def _logdet(L: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def _check_shapes(W, Omega, Lambda) -> tuple[int, int]:
    m, n = np.shape(W)
    if np.shape(Omega) != (n, n) or np.shape(Lambda) != (m, m):
        raise DimensionError(
            f"mean is ({m}, {n}); need Omega ({n}, {n}) and Lambda ({m}, {m}), "
            f"got {np.shape(Omega)} and {np.shape(Lambda)}"
        )
    return m, n


def _whitened(D: np.ndarray, L_lambda: np.ndarray, L_omega: np.ndarray) -> np.ndarray:
    """``L_lambda^{-1} D L_omega^{-T}``, whose squared Frobenius norm is
    ``Tr(Lambda^{-1} D Omega^{-1} D^T)``."""
    A = np.linalg.solve(L_lambda, D)
    return np.linalg.solve(L_omega, A.T).T


def matnorm_logpdf(X, W, Omega, Lambda) -> float:
    """Log density of ``X`` under the matrix normal ``N(W, Omega kron Lambda)``."""
    X = np.asarray(X, float)
    W = np.asarray(W, float)
    m, n = _check_shapes(W, Omega, Lambda)
    if X.shape != (m, n):
        raise DimensionError(f"X has shape {X.shape}, expected {(m, n)}")
    Lo = _chol(Omega, "Omega")
    Ll = _chol(Lambda, "Lambda")
    R = _whitened(X - W, Ll, Lo)
    return (
        -0.5 * m * n * LOG_2PI
        - 0.5 * n * _logdet(Ll)
        - 0.5 * m * _logdet(Lo)
        - 0.5 * float(np.sum(R * R))
    )


def matnorm_kl(P, Q) -> float:
    """``KL(N(W, Omega kron Lambda) || N(W', Omega' kron Lambda'))`` for
    ``P = (W, Omega, Lambda)`` and ``Q = (W', Omega', Lambda')``.

    This is the exact divergence: the closed form with the constant ``mn / 2``
    removed so that ``KL(P || P) == 0``.
    """
    W, Omega, Lambda = (np.asarray(a, float) for a in P)
    W2, Omega2, Lambda2 = (np.asarray(a, float) for a in Q)
    m, n = _check_shapes(W, Omega, Lambda)
    if _check_shapes(W2, Omega2, Lambda2) != (m, n):
        raise DimensionError("distributions have different shapes")
    Lo, Ll = _chol(Omega, "Omega"), _chol(Lambda, "Lambda")
    Lo2, Ll2 = _chol(Omega2, "Omega'"), _chol(Lambda2, "Lambda'")
    # Tr(Lambda'^{-1} Lambda) = ||Ll2^{-1} Ll||_F^2
    tr_l = float(np.sum(np.linalg.solve(Ll2, Ll) ** 2))
    tr_o = float(np.sum(np.linalg.solve(Lo2, Lo) ** 2))
    R = _whitened(W - W2, Ll2, Lo2)
    return (
        0.5 * n * (_logdet(Ll2) - _logdet(Ll))
        + 0.5 * m * (_logdet(Lo2) - _logdet(Lo))
        + 0.5 * tr_l * tr_o
        + 0.5 * float(np.sum(R * R))
        - 0.5 * m * n
    )


def faroma_objective(candidate, previous: FactoredModel, q: SparseVector, p: SparseVector, r: float | None = None) -> float:
    """The f-AROMA update objective at ``candidate = (W, Omega, Lambda)``.

    Evaluated term by term as written, without dropping the ``mn / 2`` that
    the trace coupling term contributes at ``candidate == previous``.
    """
    r = previous.r if r is None else float(r)
    W, Omega, Lambda = (np.asarray(a, float) for a in candidate)
    m, n = _check_shapes(W, Omega, Lambda)
    if previous.W.shape != (m, n):
        raise DimensionError("candidate and previous model shapes differ")
    Lo, Ll = _chol(Omega, "Omega"), _chol(Lambda, "Lambda")
    Lo0, Ll0 = _chol(previous.Omega, "previous Omega"), _chol(previous.Lambda, "previous Lambda")
    log_l = 0.5 * n * (_logdet(Ll0) - _logdet(Ll))
    log_o = 0.5 * m * (_logdet(Lo0) - _logdet(Lo))
    R = _whitened(W - previous.W, Ll0, Lo0)
    mean_term = 0.5 * float(np.sum(R * R))
    hinge = max(0.0, 1.0 - bilinear_score(q, W, p))
    loss_term = hinge**2 / (2.0 * r)
    coupling = 0.5 * float(np.sum(np.linalg.solve(Ll0, Ll) ** 2)) * float(np.sum(np.linalg.solve(Lo0, Lo) ** 2))
    confidence = quadratic_form(p, Omega) * quadratic_form(q, Lambda) / (2.0 * r)
    return log_l + log_o + mean_term + loss_term + coupling + confidence


def comparator_hinge(V: np.ndarray, q: SparseVector, p: SparseVector) -> float:
    return max(0.0, 1.0 - bilinear_score(q, V, p))


def _check_comparator(V, trace: RunTrace) -> np.ndarray:
    V = np.asarray(V, float)
    if V.shape != (trace.m, trace.n):
        raise DimensionError(f"comparator has shape {V.shape}, trace is ({trace.m}, {trace.n})")
    return V


def update_energy(trace: RunTrace) -> np.ndarray:
    """``A[k, l] = sum over update rounds of q_k^2 p_l^2``."""
    A = np.zeros((trace.m, trace.n))
    for rec in trace.records:
        if rec.updated and rec.q.nnz and rec.p.nnz:
            A[np.ix_(rec.q.indices, rec.p.indices)] += np.outer(rec.q.values**2, rec.p.values**2)
    return A


def thm1_bound(V, trace: RunTrace) -> float:
    """Mistake bound for d-AROMA against comparator ``V``, evaluated literally."""
    V = _check_comparator(V, trace)
    r = trace.r
    updates = trace.updates()
    n_u = sum(rec.in_U for rec in updates)
    loss = sum(comparator_hinge(V, rec.q, rec.p) for rec in updates)
    A = update_energy(trace)
    V2 = V * V
    first = math.sqrt(float(np.sum(V2)) + float(np.sum(V2 * A)) / r)
    second = math.sqrt(r * float(np.sum(np.log1p(A / r))))
    return loss - n_u + first * second + 2 * n_u


def _final_factors(trace: RunTrace) -> tuple[np.ndarray, np.ndarray]:
    try:
        Omega, Lambda = trace.final["Omega"], trace.final["Lambda"]
    except KeyError as exc:
        raise ValueError(f"trace of variant {trace.variant!r} has no final Omega/Lambda") from exc
    return Omega, Lambda


def thm2_bound(V, trace: RunTrace) -> float:
    """Mistake bound for mistake-driven f-AROMA against comparator ``V``."""
    V = _check_comparator(V, trace)
    Omega, Lambda = _final_factors(trace)
    Lo, Ll = _chol(Omega, "final Omega"), _chol(Lambda, "final Lambda")
    loss = sum(comparator_hinge(V, rec.q, rec.p) for rec in trace.records if rec.in_M)
    # Tr(V Omega^{-1} V^T Lambda^{-1})
    R = _whitened(V, Ll, Lo)
    align = float(np.sum(R * R))
    # log det(A^{-1}) = -log det(A)
    capacity = min(-trace.m * _logdet(Lo), -trace.n * _logdet(Ll))
    return loss + 2.0 * math.sqrt(align) * math.sqrt(max(0.0, trace.r * capacity))


@dataclass(frozen=True)
class Lemma3Result:
    lhs: float
    rhs_m: float
    rhs_n: float
    ok: bool

    def __iter__(self):
        return iter((self.lhs, self.rhs_m, self.rhs_n, self.ok))


def lemma3_check(trace: RunTrace) -> Lemma3Result:
    """Sum of post-update ``(q^T Lambda_i q)(p^T Omega_i p)`` over update rounds
    against ``m r log det(Omega_N^{-1})`` and ``n r log det(Lambda_N^{-1})``."""
    lhs = 0.0
    for rec in trace.records:
        if not rec.updated:
            continue
        if rec.q_form_post is None or rec.p_form_post is None:
            raise ValueError(f"round {rec.round} has no post-update quadratic forms")
        lhs += rec.q_form_post * rec.p_form_post
    Omega, Lambda = _final_factors(trace)
    Lo, Ll = _chol(Omega, "final Omega"), _chol(Lambda, "final Lambda")
    rhs_m = -trace.m * trace.r * _logdet(Lo)
    rhs_n = -trace.n * trace.r * _logdet(Ll)
    ok = lhs <= min(rhs_m, rhs_n) + BOUND_RTOL * max(1.0, abs(lhs))
    return Lemma3Result(lhs, rhs_m, rhs_n, bool(ok))


def bound_holds(mistakes: int, bound: float) -> bool:
    return mistakes <= bound + BOUND_RTOL * max(1.0, abs(bound))
