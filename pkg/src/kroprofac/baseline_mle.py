"""Maximum-likelihood baseline with Kronecker structure on both the mean
and the covariance.

Fits theta = (beta1, beta2, Sigma1, Sigma2) under the matrix-normal model
by block-coordinate ascent: each half-step solves the exact conditional
maximizer for either the row parameters (beta1, Sigma1) or the column
parameters (beta2, Sigma2) with the other block held fixed, so the
log-likelihood is nondecreasing by construction.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericError

# Monotonicity slack: ascent steps may lose this much (relative) to rounding.
ASCENT_SLACK = 1e-8

# Eigenvalue floor below which a covariance update gets diagonal jitter.
PD_EIG_MIN = 1e-10
PD_JITTER_REL = 1e-8

# Residual energy (relative to the response energy) below which the fit is
# exact to rounding; the likelihood is then unbounded in the covariances and
# further iterations would only chase floating-point noise.
PERFECT_FIT_REL = 1e-12


@dataclass
class MleState:
    """Parameters, log-likelihood, and convergence diagnostics of one fit."""

    beta1: np.ndarray
    beta2: np.ndarray
    Sigma1: np.ndarray
    Sigma2: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    loglik_trace: list = field(default_factory=list)
    pinv_fallback: bool = False

    def nu_hat(self):
        return np.kron(self.beta2, self.beta1)


def _as_stacks(data):
    """Unstack vectorized rows into (n, q1, q2) and (n, p1, p2) arrays.

    Row i holds vec(M_i) in column-major order, so reshaping a row to
    (cols, rows) yields M_i transposed."""
    d = data.dims
    x3 = data.X.reshape(-1, d.q2, d.q1).swapaxes(1, 2)
    y3 = data.Y.reshape(-1, d.p2, d.p1).swapaxes(1, 2)
    return np.ascontiguousarray(x3), np.ascontiguousarray(y3)


def _chol_inv(sigma):
    """Cholesky-based inverse and log-determinant of a positive-definite
    matrix; raises NumericError otherwise."""
    s = np.asarray(sigma, dtype=np.float64)
    try:
        c, low = scipy.linalg.cho_factor(s)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise NumericError(f"Sigma is not positive definite: {exc}") from exc
    inv = scipy.linalg.cho_solve((c, low), np.eye(s.shape[0]))
    logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
    return inv, logdet


def _repair_pd(sigma):
    """Add relative diagonal jitter when the smallest eigenvalue has
    collapsed; keeps covariance updates invertible in n << p regimes."""
    s = np.asarray(sigma, dtype=np.float64)
    p = s.shape[0]
    w = np.linalg.eigvalsh(s)
    if w[0] < PD_EIG_MIN * max(1.0, float(w[-1])) or w[0] <= 0:
        tr = float(np.trace(s))
        jitter = PD_JITTER_REL * tr / p if tr > 0 else PD_JITTER_REL
        s = s + jitter * np.eye(p)
    return s


def log_likelihood(state, data):
    """Matrix-normal log-likelihood (additive constants dropped):

    l = (-n p2 ln|Sigma1| - n p1 ln|Sigma2|
         - sum_i tr{Sigma2^{-1} R_i' Sigma1^{-1} R_i}) / 2

    with R_i = Y_i - beta1 X_i beta2'.  The determinant weights follow the
    matrix-normal density (|Sigma1| enters with exponent p2), which also
    makes the value invariant under (Sigma1, Sigma2) -> (c Sigma1,
    Sigma2 / c).
    """
    dims = data.dims
    n = data.n
    x3, y3 = _as_stacks(data)
    s1_inv, logdet1 = _chol_inv(state.Sigma1)
    s2_inv, logdet2 = _chol_inv(state.Sigma2)
    resid = y3 - state.beta1 @ x3 @ state.beta2.T
    quad = float(np.sum((s1_inv @ resid @ s2_inv) * resid))
    return 0.5 * (-n * dims.p2 * logdet1 - n * dims.p1 * logdet2 - quad)


def _solve_coef(c, m):
    """beta = C M^{-1}, falling back to the pseudo-inverse when the small
    Gram-like matrix M is singular.  Returns (beta, used_pinv)."""
    try:
        return scipy.linalg.solve(m, c.T, assume_a="pos").T, False
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError, ValueError):
        return c @ np.linalg.pinv(m), True


def _normalize(beta1, beta2, sigma1, sigma2):
    """Fix the scale indeterminacies: ||beta1||_F = ||beta2||_F with the
    first entry of beta2 nonnegative, and ||Sigma2||_F = 1.  Leaves
    beta2 (x) beta1, Sigma2 (x) Sigma1, and the log-likelihood unchanged."""
    n1 = np.linalg.norm(beta1)
    n2 = np.linalg.norm(beta2)
    if n1 > 0 and n2 > 0:
        target = np.sqrt(n1 * n2)
        beta1 = beta1 * (target / n1)
        beta2 = beta2 * (target / n2)
    if beta2.flat[0] < 0:
        beta1, beta2 = -beta1, -beta2
    s = np.linalg.norm(sigma2)
    if s > 0:
        sigma2 = sigma2 / s
        sigma1 = sigma1 * s
    return beta1, beta2, sigma1, sigma2


def mle_fit(data, init=None, max_iter=100, tol=1e-6):
    """Block-coordinate maximization of the dual-Kronecker log-likelihood.

    Each iteration performs the row half-step
        beta1  <- [sum_i Y_i S2i beta2 X_i'] [sum_i X_i beta2' S2i beta2 X_i']^{-1}
        Sigma1 <- (n p2)^{-1} sum_i R_i S2i R_i'
    (S2i = Sigma2^{-1}, R_i the residual with the fresh beta1), followed by
    the symmetric column half-step on transposed residuals, then
    renormalizes the scale indeterminacies.  Stops when the relative
    log-likelihood change drops below tol or after max_iter iterations.

    init defaults to the d = 1 Kronecker-factorization fit for the betas
    with identity covariances; a consistent initializer keeps the ascent
    away from poor stationary points.
    """
    from .estimator import kro_pro_fac

    dims = data.dims
    n = data.n
    x3, y3 = _as_stacks(data)
    x3t = x3.transpose(0, 2, 1)

    if init is None:
        seed_fit = kro_pro_fac(data, d_bar=1, d_fixed=1)
        b1, b2 = seed_fit.coefficients.factors[0]
        beta1, beta2 = b1.copy(), b2.copy()
        sigma1 = np.eye(dims.p1)
        sigma2 = np.eye(dims.p2)
    else:
        beta1, beta2 = init.beta1.copy(), init.beta2.copy()
        sigma1, sigma2 = init.Sigma1.copy(), init.Sigma2.copy()

    beta1, beta2, sigma1, sigma2 = _normalize(beta1, beta2, sigma1, sigma2)
    loglik = log_likelihood(MleState(beta1, beta2, sigma1, sigma2, -np.inf, 0, False), data)
    trace = [loglik]
    used_pinv = False
    converged = False
    iterations = 0
    energy_y = float(np.sum(y3 * y3))

    for it in range(1, max_iter + 1):
        iterations = it
        # Perfect-fit guard: once the residuals are rounding noise the
        # likelihood has no maximizer (it diverges as the covariances
        # shrink), so stop with the current parameters.
        resid = y3 - beta1 @ x3 @ beta2.T
        if float(np.sum(resid * resid)) <= PERFECT_FIT_REL**2 * energy_y:
            converged = True
            break

        # Row half-step: update (beta1, Sigma1) with (beta2, Sigma2) fixed.
        sigma2 = _repair_pd(sigma2)
        s2_inv, _ = _chol_inv(sigma2)
        w2 = s2_inv @ beta2                          # p2 x q2
        c1 = np.matmul(y3 @ w2, x3t).sum(axis=0)     # p1 x q1
        g2 = beta2.T @ w2                            # q2 x q2
        m1 = np.matmul(x3 @ g2, x3t).sum(axis=0)     # q1 x q1
        beta1, pf = _solve_coef(c1, m1)
        used_pinv = used_pinv or pf
        resid = y3 - beta1 @ x3 @ beta2.T
        sigma1 = np.matmul(resid @ s2_inv, resid.transpose(0, 2, 1)).sum(axis=0)
        sigma1 = 0.5 * (sigma1 + sigma1.T) / (n * dims.p2)

        # Column half-step: update (beta2, Sigma2) with (beta1, Sigma1) fixed.
        sigma1 = _repair_pd(sigma1)
        s1_inv, _ = _chol_inv(sigma1)
        w1 = s1_inv @ beta1                          # p1 x q1
        y3t = y3.transpose(0, 2, 1)
        c2 = np.matmul(y3t @ w1, x3).sum(axis=0)     # p2 x q2
        g1 = beta1.T @ w1                            # q1 x q1
        m2 = np.matmul(x3t @ g1, x3).sum(axis=0)     # q2 x q2
        beta2, pf = _solve_coef(c2, m2)
        used_pinv = used_pinv or pf
        resid = y3 - beta1 @ x3 @ beta2.T
        sigma2 = np.matmul(resid.transpose(0, 2, 1) @ s1_inv, resid).sum(axis=0)
        sigma2 = 0.5 * (sigma2 + sigma2.T) / (n * dims.p1)
        sigma2 = _repair_pd(sigma2)

        beta1, beta2, sigma1, sigma2 = _normalize(beta1, beta2, sigma1, sigma2)
        new_loglik = log_likelihood(
            MleState(beta1, beta2, sigma1, sigma2, loglik, it, False), data
        )
        if new_loglik < loglik - ASCENT_SLACK * (1.0 + abs(loglik)):
            raise NumericError(
                f"log-likelihood decreased at iteration {it}: "
                f"{loglik:.12g} -> {new_loglik:.12g}"
            )
        trace.append(new_loglik)
        delta = abs(new_loglik - loglik)
        loglik = new_loglik
        if delta <= tol * (1.0 + abs(loglik)):
            converged = True
            break

    return MleState(
        beta1=beta1,
        beta2=beta2,
        Sigma1=sigma1,
        Sigma2=sigma2,
        loglik=loglik,
        iterations=iterations,
        converged=converged,
        loglik_trace=trace,
        pinv_fallback=used_pinv,
    )
