"""PCA projection baseline (power iteration with deflation)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure, DimMismatch, InvalidConfig


@dataclass(frozen=True, eq=False)
class PcaModel:
    components: np.ndarray  # [d_out x D], orthonormal rows
    mean: np.ndarray
    explained_variance: np.ndarray


def _start_vector(cov, basis):
    """Largest-norm column of the deflated covariance, orthogonalized.

    Falls back to the first standard basis vector not in the span of
    ``basis`` when the deflated matrix is numerically zero.
    """
    d = cov.shape[0]
    norms = np.linalg.norm(cov, axis=0)
    if norms.max() > 0:
        v = cov[:, int(np.argmax(norms))].copy()
        for b in basis:
            v -= (b @ v) * b
        if np.linalg.norm(v) > 1e-12 * norms.max():
            return v / np.linalg.norm(v)
    for j in range(d):
        v = np.zeros(d)
        v[j] = 1.0
        for b in basis:
            v -= (b @ v) * b
        nv = np.linalg.norm(v)
        if nv > 1e-6:
            return v / nv
    raise ConvergenceFailure("could not build a start vector")


def pca_fit(matrix, d_out: int, tol: float = 1e-10, max_iters: int = 10000) -> PcaModel:
    """Top ``d_out`` principal directions of the centred rows.

    Each direction is found by power iteration on the deflated population
    covariance, re-orthogonalized against earlier directions every step.
    Iteration stops once the eigen-residual |Cv - lambda v| drops below
    ``tol`` times the largest eigenvalue.
    """
    x = np.asarray(getattr(matrix, "values", matrix), dtype=np.float64)
    s, dim = x.shape
    if not 1 <= d_out <= min(s, dim):
        raise InvalidConfig(f"d_out={d_out} must lie in 1..{min(s, dim)}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / s
    scale = max(float(np.abs(cov).max()), 1e-300)
    components, variances = [], []
    deflated = cov.copy()
    for c in range(d_out):
        v = _start_vector(deflated, components)
        lam = float(v @ deflated @ v)
        for it in range(max_iters):
            w = deflated @ v
            for b in components:
                w -= (b @ w) * b
            lam = float(v @ w)
            if np.linalg.norm(w - lam * v) <= tol * scale:
                break
            nw = np.linalg.norm(w)
            if nw <= tol * scale:
                # remaining spectrum is zero; v is as good as any direction
                lam = 0.0
                break
            v = w / nw
        else:
            raise ConvergenceFailure(
                f"component {c} did not converge in {max_iters} iterations"
            )
        # sign convention: largest-magnitude entry positive
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        components.append(v)
        variances.append(max(lam, 0.0))
        deflated = deflated - lam * np.outer(v, v)
    return PcaModel(np.array(components), mean, np.array(variances))


def pca_transform(model: PcaModel, matrix) -> np.ndarray:
    x = np.asarray(getattr(matrix, "values", matrix), dtype=np.float64)
    if x.shape[-1] != len(model.mean):
        raise DimMismatch(f"expected {len(model.mean)} dims, got {x.shape[-1]}")
    return (x - model.mean) @ model.components.T


def pca_inverse(model: PcaModel, projected) -> np.ndarray:
    return np.asarray(projected) @ model.components + model.mean
