"""AROW for binary classification of vectors, full or diagonal covariance.

The diagonal mode is the exact vector counterpart of d-AROMA: running it on
``vec(q p^T)`` with label +1 reproduces the matrix learner entry by entry.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import DimensionError, SparseVector


@dataclass(frozen=True)
class ArowModel:
    """Gaussian ``N(w, sigma)`` over weight vectors.

    ``sigma`` is a ``(d, d)`` matrix in full mode and a length-``d`` vector of
    variances in diagonal mode.
    """

    w: np.ndarray
    sigma: np.ndarray
    r: float

    @property
    def dim(self) -> int:
        return self.w.shape[0]

    @property
    def diagonal(self) -> bool:
        return self.sigma.ndim == 1


def init_arow(dim: int, r: float, diagonal: bool = True, sigma0: float = 1.0) -> ArowModel:
    if r <= 0:
        raise ValueError(f"r must be positive, got {r}")
    sigma = np.full(dim, float(sigma0)) if diagonal else float(sigma0) * np.eye(dim)
    return ArowModel(np.zeros(dim), sigma, float(r))


def _check(model: ArowModel, x: SparseVector) -> None:
    if x.dim != model.dim:
        raise DimensionError(f"model has dim {model.dim}, input has dim {x.dim}")


def _dot(w: np.ndarray, x: SparseVector) -> float:
    return float(w[x.indices] @ x.values) if x.nnz else 0.0


def arow_predict(model: ArowModel, x: SparseVector) -> int:
    """Sign of ``w . x``; a zero score predicts +1."""
    _check(model, x)
    return 1 if _dot(model.w, x) >= 0.0 else -1


def arow_update(model: ArowModel, x: SparseVector, y: int) -> ArowModel:
    """One AROW step on ``(x, y)``; returns ``model`` itself when the hinge is zero."""
    _check(model, x)
    hinge = max(0.0, 1.0 - y * _dot(model.w, x))
    if hinge == 0.0:
        return model
    r = model.r
    idx, xv = x.indices, x.values
    if model.diagonal:
        s = model.sigma[idx]
        sx = s * xv
        confidence = float(xv @ sx)
        denom = confidence + r
        w = model.w.copy()
        w[idx] += (hinge / denom) * y * sx
        sigma = model.sigma.copy()
        sigma[idx] = s - (sx * sx) / denom
        return ArowModel(w, sigma, r)
    Sx = model.sigma[:, idx] @ xv
    confidence = float(xv @ Sx[idx])
    denom = confidence + r
    w = model.w + (hinge / denom) * y * Sx
    sigma = model.sigma - np.outer(Sx, Sx) / denom
    sigma = 0.5 * (sigma + sigma.T)
    return ArowModel(w, sigma, r)


def gaussian_kl(mu0, cov0, mu1, cov1) -> float:
    """Exact ``KL(N(mu0, cov0) || N(mu1, cov1))``; raises if a covariance is not PD."""
    mu0, mu1 = np.asarray(mu0, float), np.asarray(mu1, float)
    cov0, cov1 = np.atleast_2d(cov0).astype(float), np.atleast_2d(cov1).astype(float)
    d = mu0.shape[0]
    try:
        L0 = np.linalg.cholesky(cov0)
        L1 = np.linalg.cholesky(cov1)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite") from exc
    M = np.linalg.solve(L1, L0)
    diff = np.linalg.solve(L1, mu1 - mu0)
    logdet0 = 2.0 * np.sum(np.log(np.diag(L0)))
    logdet1 = 2.0 * np.sum(np.log(np.diag(L1)))
    return 0.5 * (float(np.sum(M * M)) + float(diff @ diff) - d + logdet1 - logdet0)


def arow_objective(candidate: tuple[np.ndarray, np.ndarray], previous: ArowModel, x: SparseVector, y: int, r: float | None = None) -> float:
    """AROW update objective evaluated at ``candidate = (w, sigma)``.

    KL from the candidate Gaussian to the previous one, plus the squared hinge
    and the confidence term ``x^T sigma x``, each scaled by ``1 / (2r)``.
    """
    _check(previous, x)
    r = previous.r if r is None else float(r)
    w, sigma = np.asarray(candidate[0], float), np.asarray(candidate[1], float)
    S = np.diag(sigma) if sigma.ndim == 1 else sigma
    S_prev = np.diag(previous.sigma) if previous.diagonal else previous.sigma
    if not np.allclose(S, S.T, rtol=0, atol=1e-12):
        raise ValueError("candidate covariance is not symmetric")
    kl = gaussian_kl(w, S, previous.w, S_prev)
    hinge = max(0.0, 1.0 - y * _dot(w, x))
    xd = x.to_dense()
    return kl + hinge**2 / (2 * r) + float(xd @ S @ xd) / (2 * r)
