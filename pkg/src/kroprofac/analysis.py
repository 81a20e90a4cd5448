"""Two-group channel-effect pipeline for matrix-valued observations.

Each group gets an intercept-only Kronecker-factorized mean fit; the
per-channel effect is the column mean of the (unvectorized) difference of
the two fitted means; per-channel Welch t-tests against zero are adjusted
with the Benjamini-Yekutieli procedure, which controls the false
discovery rate under arbitrary dependence between channels.
"""

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DimensionError
from .estimator import kro_pro_fac, nu_hat_from_report
from .simgen import Dataset
from .tensor_core import Dims, vec, vec_inv


@dataclass
class GroupData:
    """One group of subjects, each a p1 x p2 matrix."""

    label: str
    samples: list

    def __post_init__(self):
        if not self.samples:
            raise ValueError(f"group {self.label!r} is empty")
        shape = self.samples[0].shape
        for i, s in enumerate(self.samples):
            if s.shape != shape:
                raise DimensionError(
                    f"group {self.label!r}: sample {i} has shape {s.shape}, expected {shape}"
                )

    @property
    def n_subjects(self):
        return len(self.samples)

    @property
    def shape(self):
        return self.samples[0].shape


@dataclass
class ChannelTestResult:
    """Per-channel effects, test statistics, and adjusted p-values."""

    theta_hat: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    p_adjusted: np.ndarray
    d_selected: tuple
    degenerate: np.ndarray

    def rejections(self, alpha=0.05):
        return np.flatnonzero(self.p_adjusted <= alpha)


def group_dataset(group):
    """Intercept-only dataset for one group: X is a column of ones, so the
    OLS coefficient is exactly vec of the group mean."""
    p1, p2 = group.shape
    n = group.n_subjects
    y = np.vstack([vec(s) for s in group.samples])
    return Dataset(dims=Dims(p1, p2, 1, 1, n), X=np.ones((n, 1)), Y=y)


def fit_group_mean(group, d_bar=None, d_fixed=None):
    """Kronecker-factorized fit of a group's mean matrix.

    With q1 = q2 = 1 the rearranged OLS coefficient is just the transposed
    group mean, so the factors are column vectors: beta1_k in R^{p1 x 1},
    beta2_k in R^{p2 x 1}.
    """
    return kro_pro_fac(group_dataset(group), d_bar=d_bar, d_fixed=d_fixed)


def channel_effects(fit1, fit2):
    """Column means of vec_inv(nu_hat_1 - nu_hat_2, p1, p2): the fitted
    effect per channel after averaging out the row (time) dimension."""
    d1, d2 = fit1.coefficients.dims, fit2.coefficients.dims
    if (d1.p1, d1.p2) != (d2.p1, d2.p2):
        raise DimensionError(f"fits disagree on dims: {d1} vs {d2}")
    diff = nu_hat_from_report(fit1) - nu_hat_from_report(fit2)
    return vec_inv(diff[:, 0], d1.p1, d1.p2).mean(axis=0)


def channel_scores(group):
    """Per-subject, per-channel time-averaged scores (n_subjects x p2)."""
    return np.vstack([s.mean(axis=0) for s in group.samples])


def channel_t_tests(theta_hat, group1, group2):
    """Welch t-tests of H0: theta_c = 0 for every channel c.

    The numerator is the supplied (typically denoised) effect estimate;
    the standard error comes from the per-subject time-averaged channel
    scores of the raw data, the only available dispersion source.
    Returns (t_stats, p_values, degenerate) where degenerate flags
    channels with zero variance in both groups.
    """
    theta_hat = np.asarray(theta_hat, dtype=np.float64)
    n1, n2 = group1.n_subjects, group2.n_subjects
    if min(n1, n2) < 2:
        raise ValueError("both groups need >= 2 subjects for t-tests")
    s1 = channel_scores(group1)
    s2 = channel_scores(group2)
    if s1.shape[1] != theta_hat.size or s2.shape[1] != theta_hat.size:
        raise DimensionError("channel count mismatch between effects and groups")
    v1 = s1.var(axis=0, ddof=1)
    v2 = s2.var(axis=0, ddof=1)
    a1, a2 = v1 / n1, v2 / n2
    se2 = a1 + a2
    degenerate = se2 == 0
    t = np.zeros_like(theta_hat)
    p = np.ones_like(theta_hat)
    ok = ~degenerate
    t[ok] = theta_hat[ok] / np.sqrt(se2[ok])
    with np.errstate(invalid="ignore", divide="ignore"):
        df = se2**2 / (a1**2 / (n1 - 1) + a2**2 / (n2 - 1))
    p[ok] = 2.0 * stats.t.sf(np.abs(t[ok]), df[ok])
    # Zero-variance channels: reject exactly when the effect is nonzero.
    deg_nonzero = degenerate & (theta_hat != 0)
    t[deg_nonzero] = np.inf * np.sign(theta_hat[deg_nonzero])
    p[deg_nonzero] = 0.0
    return t, p, degenerate


def by_adjust(p_values):
    """Benjamini-Yekutieli adjusted p-values.

    With m tests and c(m) = sum_{j<=m} 1/j: sort ascending, set
    q_(i) = min(1, c(m) * (m / i) * p_(i)), enforce monotonicity by a
    cumulative minimum from the largest index downward, and unsort.
    """
    p = np.asarray(p_values, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("expected a nonempty 1-d vector of p-values")
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    cm = float(np.sum(1.0 / np.arange(1, m + 1)))
    order = np.argsort(p, kind="stable")
    ranks = np.arange(1, m + 1, dtype=np.float64)
    q = np.minimum(1.0, cm * (m / ranks) * p[order])
    adj = np.minimum.accumulate(q[::-1])[::-1]
    out = np.empty(m)
    out[order] = adj
    return out


def two_group_analysis(group1, group2, d_bar=None, d1=None, d2=None,
                       ols_baseline=False):
    """Full pipeline: per-group fits, channel effects, Welch tests, BY
    adjustment.

    With ols_baseline=True the Kronecker mean estimates are replaced by
    the raw group means (the plain OLS estimate under the intercept-only
    design); the downstream testing is identical.
    """
    p1, p2 = group1.shape
    if group2.shape != (p1, p2):
        raise DimensionError(
            f"groups disagree on shape: {group1.shape} vs {group2.shape}"
        )
    fit1 = fit_group_mean(group1, d_bar=d_bar, d_fixed=d1)
    fit2 = fit_group_mean(group2, d_bar=d_bar, d_fixed=d2)
    if ols_baseline:
        ybar1 = np.mean([s for s in group1.samples], axis=0)
        ybar2 = np.mean([s for s in group2.samples], axis=0)
        theta = (ybar1 - ybar2).mean(axis=0)
    else:
        theta = channel_effects(fit1, fit2)
    t, p, degenerate = channel_t_tests(theta, group1, group2)
    return ChannelTestResult(
        theta_hat=theta,
        t_stats=t,
        p_values=p,
        p_adjusted=by_adjust(p),
        d_selected=(fit1.d_selected, fit2.d_selected),
        degenerate=degenerate,
    )
