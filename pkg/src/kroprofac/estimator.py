"""The Kronecker-product-factorization estimator and its rank-regularized
variants.

The pipeline: ordinary least squares on the stacked model, block
rearrangement of the coefficient estimate, truncated SVD, rank selection
by the singular-value-ratio criterion, and factor extraction by the
symmetric sigma^(1/2) split
    vec(beta2_k) = sigma_k^(1/2) U_k,   vec(beta1_k) = sigma_k^(1/2) V_k.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .linalg import normal_solve, ols_solve, svd_full, svd_randomized, svd_truncated
from .tensor_core import Dims, kron, rearrange, rearrange_inv, vec, vec_inv

# Guard below which a trailing singular value counts as zero in the ratio
# criterion (relative to sigma_1).
RANK_RATIO_EPS = 1e-12

# Rearranged matrices up to this size use the deterministic full SVD; larger
# ones switch to the randomized engine with d_bar + 1 components.
FULL_SVD_MAX_DIM = 512

DEFAULT_D_BAR_CAP = 10


@dataclass
class KroneckerCoefficients:
    """Ordered factor pairs (beta1_k: p1 x q1, beta2_k: p2 x q2) with their
    singular values, representing nu = sum_k kron(beta2_k, beta1_k)."""

    dims: Dims
    d: int
    factors: list
    sigma: np.ndarray

    def nu(self):
        """Materialize nu = sum_k kron(beta2_k, beta1_k)."""
        out = np.zeros(self.dims.nu_shape)
        for b1, b2 in self.factors:
            out += kron(b2, b1)
        return out


@dataclass
class FitReport:
    """Output of one estimator run: selected coefficients plus the spectrum
    and selection diagnostics.

    singular_values_all holds the spectrum of the rearranged OLS estimate
    that was actually computed: the full spectrum under the exact SVD
    engine, the top d_bar + 1 values under the randomized engine.
    """

    coefficients: KroneckerCoefficients
    singular_values_all: np.ndarray
    d_bar: int
    d_selected: int
    selection_ratios: np.ndarray

    def nu_hat(self):
        return self.coefficients.nu()


def fit_ols_nu(data):
    """OLS estimate nu_tilde = [(X'X)^{-1} X'Y]' of shape p1*p2 x q1*q2."""
    return ols_solve(data.X, data.Y).T


def fit_ols_nu_stream(x, y_blocks):
    """OLS estimate accumulated over row blocks of Y.

    y_blocks yields (start_row, block) pairs covering Y's rows in order;
    only X and the q1*q2 x p1*p2 accumulator are held in memory, so the
    response stack can be streamed from disk.
    """
    x = np.asarray(x, dtype=np.float64)
    n, q = x.shape
    xty = None
    rows_seen = 0
    for start, block in y_blocks:
        if start != rows_seen:
            raise DimensionError(
                f"row blocks must be consecutive; expected start {rows_seen}, got {start}"
            )
        if xty is None:
            xty = np.zeros((q, block.shape[1]))
        xty += x[start:start + block.shape[0]].T @ block
        rows_seen += block.shape[0]
    if rows_seen != n:
        raise DimensionError(f"blocks covered {rows_seen} rows, X has {n}")
    return normal_solve(x.T @ x, xty).T


def selection_ratios(sigmas, d_bar):
    """Ratios sigma_j / sigma_{j+1} for j = 1..d_bar, with the zero-tail
    guard mapping ratios against sigma_{j+1} <= eps * sigma_1 to +inf."""
    s = np.asarray(sigmas, dtype=np.float64)
    if not 1 <= d_bar <= s.size - 1:
        raise ValueError(f"d_bar={d_bar} out of range [1, {s.size - 1}]")
    guard = RANK_RATIO_EPS * s[0]
    ratios = np.empty(d_bar)
    for j in range(d_bar):
        if s[j + 1] <= guard:
            ratios[j] = np.inf
        else:
            ratios[j] = s[j] / s[j + 1]
    return ratios


def select_rank(sigmas, d_bar):
    """Singular-value-ratio rank selection:
    d_hat = argmax_{j in 1..d_bar} sigma_j / sigma_{j+1} (1-based),
    ties broken by the smallest j."""
    s = np.asarray(sigmas, dtype=np.float64)
    if s.size and s[0] <= 0:
        return 1
    return int(np.argmax(selection_ratios(s, d_bar))) + 1


def default_d_bar(dims):
    """min(10, min(p1*q1, p2*q2) - 1): covers every benchmark (true d <= 3)
    while keeping the ratio criterion well defined."""
    return min(DEFAULT_D_BAR_CAP, min(dims.p1 * dims.q1, dims.p2 * dims.q2) - 1)


def kro_pro_fac_from_nu(nu_tilde, dims, d_bar=None, d_fixed=None, svd_seed=0):
    """Run the rearrange / SVD / rank-select / split steps on an already
    computed coefficient matrix.

    d_fixed bypasses rank selection entirely (it only needs d_fixed <= the
    spectrum length); the ratio criterion itself needs d_bar + 1 singular
    values, hence d_bar <= min(p1*q1, p2*q2) - 1.
    """
    rm = rearrange(nu_tilde, dims)
    r = min(rm.shape)
    if d_bar is None:
        d_bar = default_d_bar(dims)
    if d_fixed is not None:
        if not 1 <= d_fixed <= r:
            raise ValueError(f"d_fixed={d_fixed} out of range [1, {r}]")
        d_bar = min(max(d_bar, 0), r - 1)
    elif not 1 <= d_bar <= r - 1:
        raise ValueError(f"d_bar={d_bar} out of range [1, {r - 1}]")
    if r <= FULL_SVD_MAX_DIM:
        f = svd_full(rm)
    else:
        k_needed = max(d_bar + 1, d_fixed or 0)
        f = svd_randomized(rm, k_needed, seed=svd_seed)
    ratios = selection_ratios(f.S, d_bar) if d_bar >= 1 else np.empty(0)
    if d_fixed is not None:
        d_sel = int(d_fixed)
    elif f.S[0] <= 0:
        d_sel = 1
    else:
        d_sel = int(np.argmax(ratios)) + 1
    factors = []
    for k in range(d_sel):
        scale = np.sqrt(f.S[k])
        factors.append((
            vec_inv(scale * f.V[:, k], dims.p1, dims.q1),
            vec_inv(scale * f.U[:, k], dims.p2, dims.q2),
        ))
    coeffs = KroneckerCoefficients(
        dims=dims, d=d_sel, factors=factors, sigma=f.S[:d_sel].copy()
    )
    return FitReport(
        coefficients=coeffs,
        singular_values_all=f.S.copy(),
        d_bar=int(d_bar),
        d_selected=d_sel,
        selection_ratios=ratios,
    )


def kro_pro_fac(data, d_bar=None, d_fixed=None, svd_seed=0):
    """Full estimator on a dataset: OLS, rearrangement, truncated SVD,
    rank selection (skipped when d_fixed is given), factor split."""
    return kro_pro_fac_from_nu(
        fit_ols_nu(data), data.dims, d_bar=d_bar, d_fixed=d_fixed, svd_seed=svd_seed
    )


def truncate_response_rows(y, p1, p2, alpha):
    """Replace each row (a vectorized p1 x p2 response) by the vec of its
    nearest rank-alpha approximation."""
    out = np.empty_like(y)
    for i in range(y.shape[0]):
        m = vec_inv(y[i], p1, p2)
        f = svd_truncated(m, alpha)
        out[i] = vec(f.reconstruct())
    return out


def variant_low_rank_response(data, alpha):
    """Rank-regularize the responses: each Y_i is replaced by its nearest
    rank-alpha approximation before estimation; X is unchanged."""
    from .simgen import Dataset

    p1, p2 = data.dims.p1, data.dims.p2
    if not 1 <= alpha <= min(p1, p2):
        raise ValueError(f"alpha={alpha} out of range [1, {min(p1, p2)}]")
    return Dataset(
        dims=data.dims,
        X=data.X,
        Y=truncate_response_rows(data.Y, p1, p2, alpha),
        seed_record=data.seed_record,
    )


def variant_reduced_rank_ols(nu_tilde, gamma):
    """Rank-regularize the OLS estimate itself: the nearest rank-gamma
    approximation of nu_tilde, before rearrangement."""
    nu_tilde = np.asarray(nu_tilde, dtype=np.float64)
    r = min(nu_tilde.shape)
    if not 1 <= gamma <= r:
        raise ValueError(f"gamma={gamma} out of range [1, {r}]")
    return svd_truncated(nu_tilde, gamma).reconstruct()


def predict(coeffs, xnew):
    """Mean response sum_k beta1_k Xnew beta2_k' for one predictor matrix."""
    xnew = np.asarray(xnew, dtype=np.float64)
    dims = coeffs.dims
    if xnew.shape != (dims.q1, dims.q2):
        raise DimensionError(
            f"Xnew shape {xnew.shape} does not match ({dims.q1}, {dims.q2})"
        )
    out = np.zeros((dims.p1, dims.p2))
    for b1, b2 in coeffs.factors:
        out += b1 @ xnew @ b2.T
    return out


def nu_hat_from_report(report):
    """Reconstruct nu_hat via the inverse rearrangement of the truncated
    SVD; identical (to rounding) to summing the Kronecker factors but
    cheaper for large dimensions."""
    coeffs = report.coefficients
    u = np.column_stack([vec(b2) for _, b2 in coeffs.factors])
    v = np.column_stack([vec(b1) for b1, _ in coeffs.factors])
    return rearrange_inv(u @ v.T, coeffs.dims)
