"""Error metrics and spectrum fractions."""

import numpy as np
import pytest

from kroprofac.estimator import kro_pro_fac
from kroprofac.linalg import svd_full
from kroprofac.metrics import (
    cumulative_singular_fraction,
    relative_error,
    subspace_errors,
)
from kroprofac.simgen import Dataset, gen_dataset
from kroprofac.tensor_core import Dims, kron


class TestRelativeError:
    def test_exact_match(self):
        m = np.arange(6.0).reshape(2, 3)
        assert relative_error(m, m) == 0.0

    def test_double_is_one(self):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((3, 3))
        assert relative_error(2.0 * m, m) == pytest.approx(1.0, rel=1e-12)

    def test_constructed_half_norm_perturbation(self):
        rng = np.random.default_rng(1)
        nu = rng.standard_normal((4, 4))
        e = rng.standard_normal((4, 4))
        e *= 0.5 * np.linalg.norm(nu) / np.linalg.norm(e)
        assert relative_error(nu + e, nu) == pytest.approx(0.5, rel=1e-12)

    def test_zero_reference(self):
        with pytest.raises(ValueError):
            relative_error(np.eye(2), np.zeros((2, 2)))


class TestCumulativeSingularFraction:
    def test_rank_one(self):
        m = np.outer([1.0, 2.0], [3.0, 4.0, 5.0])
        assert cumulative_singular_fraction(m, 1) == pytest.approx(1.0)

    def test_diagonal(self):
        assert cumulative_singular_fraction(np.diag([3.0, 1.0]), 1) == pytest.approx(0.75)

    def test_nondecreasing_and_ends_at_one(self):
        rng = np.random.default_rng(2)
        m = rng.standard_normal((10, 10))
        s = svd_full(m).S
        fracs = [cumulative_singular_fraction(m, k) for k in range(1, 11)]
        assert np.all(np.diff(fracs) >= -1e-12)
        assert fracs[-1] == pytest.approx(1.0, rel=1e-12)
        # full-SVD oracle
        np.testing.assert_allclose(fracs, np.cumsum(s) / s.sum(), rtol=1e-10)

    def test_rejects_zero_matrix(self):
        with pytest.raises(ValueError):
            cumulative_singular_fraction(np.zeros((3, 3)), 1)


class TestSubspaceErrors:
    def test_noiseless_fit_has_zero_errors(self):
        dims = Dims(5, 4, 2, 2)
        data, coeffs = gen_dataset(dims, 2, 30, None, coef_seed=3, sample_seed=4)
        fit = kro_pro_fac(data)
        rep = subspace_errors(fit, coeffs)
        assert rep.rel_frobenius <= 1e-8
        assert rep.sin_theta_U <= 1e-8
        assert rep.sin_theta_V <= 1e-8
        assert np.all(rep.sigma_abs_errors <= 1e-8 * coeffs.sigma[0])

    def test_noise_dominated_signal(self):
        # tiny planted signal under unit noise: fitted subspace is nearly
        # orthogonal to the truth
        rng = np.random.default_rng(5)
        dims = Dims(6, 6, 2, 2)
        data, coeffs = gen_dataset(dims, 1, 200, None, coef_seed=6, sample_seed=7)
        scale = 1e-4 / coeffs.sigma[0]
        tiny = type(coeffs)(
            dims=dims,
            d=1,
            factors=[(b1 * scale, b2) for b1, b2 in coeffs.factors],
            sigma=coeffs.sigma * scale,
        )
        y = data.X @ tiny.nu().T + rng.standard_normal((200, 36))
        noisy = Dataset(dims=data.dims, X=data.X, Y=y)
        fit = kro_pro_fac(noisy, d_fixed=1)
        rep = subspace_errors(fit, tiny)
        assert max(rep.sin_theta_U, rep.sin_theta_V) >= 0.9

    def test_invariant_to_joint_sign_flip(self):
        dims = Dims(4, 4, 2, 2)
        data, coeffs = gen_dataset(dims, 1, 30, None, coef_seed=8, sample_seed=9)
        fit = kro_pro_fac(data)
        rep = subspace_errors(fit, coeffs)
        flipped = type(coeffs)(
            dims=dims,
            d=fit.coefficients.d,
            factors=[(-b1, -b2) for b1, b2 in fit.coefficients.factors],
            sigma=fit.coefficients.sigma,
        )
        fit_flipped = type(fit)(
            coefficients=flipped,
            singular_values_all=fit.singular_values_all,
            d_bar=fit.d_bar,
            d_selected=fit.d_selected,
            selection_ratios=fit.selection_ratios,
        )
        rep2 = subspace_errors(fit_flipped, coeffs)
        assert rep.sin_theta_U == pytest.approx(rep2.sin_theta_U, abs=1e-10)
        assert rep.sin_theta_V == pytest.approx(rep2.sin_theta_V, abs=1e-10)

    def test_d_mismatch(self):
        dims = Dims(4, 4, 2, 2)
        data, coeffs = gen_dataset(dims, 2, 30, None, coef_seed=10, sample_seed=11)
        fit = kro_pro_fac(data, d_fixed=1)
        with pytest.raises(ValueError):
            subspace_errors(fit, coeffs)


class TestWeylOnFittedSpectra:
    def test_sigma_errors_bounded_by_perturbation_norm(self):
        from kroprofac.estimator import fit_ols_nu
        from kroprofac.tensor_core import rearrange

        dims = Dims(6, 6, 2, 2)
        data, coeffs = gen_dataset(dims, 2, 80, None, coef_seed=12, sample_seed=13)
        rng = np.random.default_rng(14)
        noisy = Dataset(dims=data.dims, X=data.X,
                        Y=data.Y + 0.5 * rng.standard_normal(data.Y.shape))
        nu_t = fit_ols_nu(noisy)
        r_fit = rearrange(nu_t, dims)
        r_true = rearrange(coeffs.nu(), dims)
        s_fit = svd_full(r_fit).S
        s_true = svd_full(r_true).S
        bound = np.linalg.norm(r_fit - r_true, 2) + 1e-10
        assert np.all(np.abs(s_fit - s_true) <= bound)


class TestFlatSpectrum:
    def test_identity_fractions_linear_in_k(self):
        m = np.eye(6)
        fracs = [cumulative_singular_fraction(m, k) for k in range(1, 7)]
        np.testing.assert_allclose(fracs, np.arange(1, 7) / 6.0, rtol=1e-12)
