"""Dense linear-algebra kernels: SVD engines, least squares, and the
sin-Theta subspace distance.

Every SVD returned by this module follows one sign convention: each left
singular vector is flipped so its largest-magnitude entry is positive
(ties broken by lowest index), and the paired right vector is flipped
with it.  This removes the inherent sign ambiguity so factor-level
comparisons are deterministic.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, NumericError, SingularDesignError

# Reciprocal-condition threshold below which a design is declared singular.
DESIGN_RCOND_MIN = 1e-12


@dataclass
class SvdFactors:
    """Compact SVD triplet: U (m x k), S (k, descending >= 0), V (n x k)."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    @property
    def k(self):
        return self.S.size

    def reconstruct(self):
        return (self.U * self.S) @ self.V.T


def _fix_signs(u, v):
    """Flip singular-vector pairs so each left vector's largest-magnitude
    entry is positive (np.argmax breaks ties at the lowest index)."""
    for j in range(u.shape[1]):
        i = int(np.argmax(np.abs(u[:, j])))
        if u[i, j] < 0:
            u[:, j] = -u[:, j]
            v[:, j] = -v[:, j]
    return u, v


def svd_full(m):
    """Compact SVD of a dense matrix with k = min(rows, cols) factors."""
    m = np.asarray(m, dtype=np.float64)
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD did not converge: {exc}") from exc
    u, v = _fix_signs(u, vt.T.copy())
    return SvdFactors(u, s, v)


def svd_truncated(m, k):
    """Top-k factors of the full SVD; by Eckart-Young-Mirsky the
    reconstruction is a nearest rank-k matrix in Frobenius norm."""
    m = np.asarray(m, dtype=np.float64)
    r = min(m.shape)
    if not 1 <= k <= r:
        raise ValueError(f"k={k} out of range [1, {r}]")
    f = svd_full(m)
    return SvdFactors(np.ascontiguousarray(f.U[:, :k]), f.S[:k].copy(),
                      np.ascontiguousarray(f.V[:, :k]))


def svd_randomized(m, k, oversample=10, power_iters=2, seed=0):
    """Randomized truncated SVD with subspace (power) iteration.

    Accurate for spectra with a gap at k; call sites rely on the contract
    that the top-k singular values match the deterministic SVD to 1e-6
    relative when sigma_k / sigma_{k+1} >= 10.  Output is a pure function
    of (m, k, oversample, power_iters, seed).

    Parameters
    ----------
    m : ndarray
        Dense input matrix.
    k : int
        Number of singular triplets to return.
    oversample : int
        Extra sketch columns beyond k.
    power_iters : int
        Subspace-iteration passes (each one multiplies by m'm), with QR
        re-orthonormalization at every step.
    seed : int
        Seed for the Gaussian test matrix.
    """
    m = np.asarray(m, dtype=np.float64)
    nrows, ncols = m.shape
    if k < 1:
        raise ValueError(f"k={k} must be >= 1")
    sketch = k + oversample
    if sketch > min(nrows, ncols):
        raise ValueError(
            f"k + oversample = {sketch} exceeds min(rows, cols) = {min(nrows, ncols)}"
        )
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x5D)))
    g = rng.standard_normal((ncols, sketch))
    q, _ = np.linalg.qr(m @ g)
    for _ in range(power_iters):
        q, _ = np.linalg.qr(m.T @ q)
        q, _ = np.linalg.qr(m @ q)
    b = q.T @ m
    try:
        ub, s, vt = np.linalg.svd(b, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD did not converge on the sketch: {exc}") from exc
    u = q @ ub
    u, v = _fix_signs(np.ascontiguousarray(u[:, :k]), np.ascontiguousarray(vt.T[:, :k]))
    return SvdFactors(u, s[:k].copy(), v)


def check_gram(xtx):
    """Validate that a Gram matrix is numerically nonsingular; returns the
    reciprocal condition estimate."""
    w = np.linalg.eigvalsh(xtx)
    wmax = float(w[-1])
    wmin = float(max(w[0], 0.0))
    rcond = wmin / wmax if wmax > 0 else 0.0
    if rcond < DESIGN_RCOND_MIN:
        raise SingularDesignError(
            f"design Gram matrix is numerically singular "
            f"(reciprocal condition {rcond:.3e} < {DESIGN_RCOND_MIN:.0e})",
            rcond=rcond,
        )
    return rcond


def normal_solve(xtx, xty):
    """Solve X'X B = X'Y via a symmetric positive-definite factorization,
    after checking the reciprocal condition of X'X."""
    check_gram(xtx)
    c, low = scipy.linalg.cho_factor(xtx)
    return scipy.linalg.cho_solve((c, low), xty)


def ols_solve(x, yv):
    """Ordinary least squares: (X'X)^{-1} X'Y for X (n x q), Y (n x p).

    Raises SingularDesignError when X'X has reciprocal condition below
    1e-12.  q is assumed small relative to n, so the normal equations with
    a Cholesky factorization are both accurate and cheap.
    """
    x = np.asarray(x, dtype=np.float64)
    yv = np.asarray(yv, dtype=np.float64)
    n, q = x.shape
    if yv.shape[0] != n:
        raise DimensionError(f"X has {n} rows but Y has {yv.shape[0]}")
    if n < q:
        raise DimensionError(f"need n >= q for OLS, got n={n}, q={q}")
    return normal_solve(x.T @ x, x.T @ yv)


def sin_theta(w1, w2):
    """sin-Theta distance sqrt(1 - sigma_min^2(W1'W2)) between the column
    spaces of two orthonormal matrices with equal column counts.

    Evaluated as the spectral norm of the projection residual
    (I - W1 W1') W2, which equals the defining expression exactly but
    stays accurate for nearly identical subspaces, where forming
    1 - sigma_min^2 directly loses half the significant digits.
    """
    w1 = np.asarray(w1, dtype=np.float64)
    w2 = np.asarray(w2, dtype=np.float64)
    if w1.shape[1] != w2.shape[1]:
        raise ValueError(
            f"column counts differ: {w1.shape[1]} vs {w2.shape[1]}"
        )
    for name, w in (("first", w1), ("second", w2)):
        gram_dev = np.max(np.abs(w.T @ w - np.eye(w.shape[1])))
        if gram_dev > 1e-6:
            raise ValueError(
                f"{name} argument is not orthonormal (max Gram deviation {gram_dev:.2e})"
            )
    resid = w2 - w1 @ (w1.T @ w2)
    s = np.linalg.svd(resid, compute_uv=False)
    return float(min(s[0], 1.0)) if s.size else 0.0


def gram_schmidt(m, normalize=False):
    """Classical Gram-Schmidt on the columns of m.

    With normalize=False the residual norms are kept (columns stay at
    whatever length the orthogonalization leaves them); with
    normalize=True the result has orthonormal columns.
    """
    m = np.array(m, dtype=np.float64)
    out = np.empty_like(m)
    for j in range(m.shape[1]):
        v = m[:, j].copy()
        for i in range(j):
            prev = out[:, i]
            denom = prev @ prev
            if denom > 0:
                v -= (prev @ v) / denom * prev
        out[:, j] = v
    if normalize:
        norms = np.linalg.norm(out, axis=0)
        if np.any(norms == 0):
            raise ValueError("columns are linearly dependent; cannot orthonormalize")
        out /= norms
    return out
