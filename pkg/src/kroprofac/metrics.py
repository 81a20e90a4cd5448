"""Evaluation metrics: relative Frobenius error, cumulative singular-value
fractions, and subspace sin-Theta errors against known truth."""

from dataclasses import dataclass

import numpy as np

from .linalg import gram_schmidt, sin_theta
from .tensor_core import vec


@dataclass
class ErrorReport:
    """Per-fit error summary against a known truth."""

    rel_frobenius: float
    sin_theta_U: float
    sin_theta_V: float
    sigma_abs_errors: np.ndarray
    meta: dict | None = None


def relative_error(nu_hat, nu):
    """||nu_hat - nu||_F / ||nu||_F."""
    nu_hat = np.asarray(nu_hat, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if nu_hat.shape != nu.shape:
        raise ValueError(f"shape mismatch: {nu_hat.shape} vs {nu.shape}")
    denom = np.linalg.norm(nu)
    if denom == 0:
        raise ValueError("reference matrix has zero Frobenius norm")
    return float(np.linalg.norm(nu_hat - nu) / denom)


def cumulative_singular_fraction(m, k):
    """f_k(M): sum of the top-k singular values divided by the nuclear
    norm.  Equals 1 at k = min(rows, cols)."""
    m = np.asarray(m, dtype=np.float64)
    r = min(m.shape)
    if not 1 <= k <= r:
        raise ValueError(f"k={k} out of range [1, {r}]")
    s = np.linalg.svd(m, compute_uv=False)
    total = float(s.sum())
    if total == 0:
        raise ValueError("zero matrix has no singular-value fractions")
    return float(s[:k].sum() / total)


def factor_subspaces(coeffs):
    """Orthonormal bases (U from the beta2 family, V from the beta1 family)
    of the vectorized factor spans."""
    u = np.column_stack([vec(b2) for _, b2 in coeffs.factors])
    v = np.column_stack([vec(b1) for b1, _ in coeffs.factors])
    return gram_schmidt(u, normalize=True), gram_schmidt(v, normalize=True)


def subspace_errors(fit, truth, meta=None):
    """sin-Theta distances between fitted and true factor subspaces plus
    the absolute singular-value errors |sigma_hat_k - sigma_k|."""
    coeffs = fit.coefficients
    if coeffs.d != truth.d:
        raise ValueError(f"factor count mismatch: fit d={coeffs.d}, truth d={truth.d}")
    u_hat, v_hat = factor_subspaces(coeffs)
    u_true, v_true = factor_subspaces(truth)
    return ErrorReport(
        rel_frobenius=relative_error(coeffs.nu(), truth.nu()),
        sin_theta_U=sin_theta(u_true, u_hat),
        sin_theta_V=sin_theta(v_true, v_hat),
        sigma_abs_errors=np.abs(coeffs.sigma - truth.sigma),
        meta=meta,
    )
