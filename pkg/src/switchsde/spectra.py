"""Spectral summaries of per-mode coefficient matrices.

For a square matrix A the summary reports the extreme eigenvalues of the
symmetric part (A + A^T)/2 and the minimal absolute value of the quadratic
form x^T A x over the unit sphere.  The latter has a closed form: it is 0
when the symmetric part is indefinite, and min(|lambda_min|, |lambda_max|)
otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SpectralSummary", "summarize", "a_of_i"]


@dataclass(frozen=True)
class SpectralSummary:
    lambda_max: float
    lambda_min: float
    rho: float


def summarize(mat) -> SpectralSummary:
    """Spectral summary of a square matrix via its symmetric part."""
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {mat.shape}")
    if not np.isfinite(mat).all():
        raise ValueError("matrix entries must be finite")
    sym = 0.5 * (mat + mat.T)
    eigs = np.linalg.eigvalsh(sym)
    lo = float(eigs[0])
    hi = float(eigs[-1])
    if lo < 0.0 < hi:
        rho = 0.0
    else:
        rho = min(abs(lo), abs(hi))
    return SpectralSummary(lambda_max=hi, lambda_min=lo, rho=rho)


def a_of_i(sigma_mats) -> np.ndarray:
    """Diffusion normal matrix sum_j sigma_j^T sigma_j (symmetric PSD)."""
    mats = [np.asarray(s, dtype=float) for s in sigma_mats]
    if not mats:
        raise ValueError("need at least one noise matrix")
    n = mats[0].shape[0]
    out = np.zeros((n, n))
    for s in mats:
        if s.ndim != 2 or s.shape != (n, n):
            raise ValueError(
                f"noise matrices must share square shape ({n},{n}); got {s.shape}"
            )
        out += s.T @ s
    return out
