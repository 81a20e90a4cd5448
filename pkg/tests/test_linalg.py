"""SVD engines, least squares, and the sin-Theta distance."""

import numpy as np
import pytest

from kroprofac.errors import DimensionError, SingularDesignError
from kroprofac.linalg import (
    gram_schmidt,
    ols_solve,
    sin_theta,
    svd_full,
    svd_randomized,
    svd_truncated,
)


def planted_spectrum(rng, m, n, sigmas):
    """Matrix with a prescribed singular spectrum via random orthonormal
    factors (QR of Gaussians)."""
    sigmas = np.asarray(sigmas, dtype=np.float64)
    k = sigmas.size
    u, _ = np.linalg.qr(rng.standard_normal((m, k)))
    v, _ = np.linalg.qr(rng.standard_normal((n, k)))
    return (u * sigmas) @ v.T


class TestSvdFull:
    def test_diagonal(self):
        f = svd_full(np.diag([3.0, 1.0]))
        np.testing.assert_allclose(f.S, [3.0, 1.0])
        np.testing.assert_allclose(np.abs(f.U), np.eye(2), atol=1e-12)
        np.testing.assert_allclose(np.abs(f.V), np.eye(2), atol=1e-12)

    def test_zero_matrix(self):
        f = svd_full(np.zeros((3, 4)))
        np.testing.assert_allclose(f.S, 0.0)

    def test_rank_one_norm_identity(self):
        rng = np.random.default_rng(0)
        b1 = rng.standard_normal((3, 2))
        b2 = rng.standard_normal((2, 2))
        m = np.outer(b2.flatten(order="F"), b1.flatten(order="F"))
        f = svd_full(m)
        np.testing.assert_allclose(
            f.S[0], np.linalg.norm(b1) * np.linalg.norm(b2), rtol=1e-12
        )
        np.testing.assert_allclose(f.S[1:], 0.0, atol=1e-12)

    def test_reconstruction_and_orthonormality(self):
        rng = np.random.default_rng(1)
        m = rng.standard_normal((7, 5))
        f = svd_full(m)
        assert np.linalg.norm(f.reconstruct() - m) <= 1e-8 * max(1.0, np.linalg.norm(m))
        assert np.max(np.abs(f.U.T @ f.U - np.eye(5))) <= 1e-10
        assert np.max(np.abs(f.V.T @ f.V - np.eye(5))) <= 1e-10
        assert np.all(np.diff(f.S) <= 0) and np.all(f.S >= 0)

    def test_sign_convention_deterministic(self):
        rng = np.random.default_rng(2)
        m = rng.standard_normal((6, 4))
        f = svd_full(m)
        for j in range(f.k):
            i = int(np.argmax(np.abs(f.U[:, j])))
            assert f.U[i, j] > 0


class TestSvdTruncated:
    def test_full_k_matches_full_svd(self):
        rng = np.random.default_rng(3)
        m = rng.standard_normal((5, 4))
        f = svd_truncated(m, 4)
        np.testing.assert_allclose(f.reconstruct(), svd_full(m).reconstruct(), atol=1e-12)

    def test_diagonal_residual(self):
        m = np.diag([5.0, 2.0, 1.0])
        f = svd_truncated(m, 2)
        np.testing.assert_allclose(f.S, [5.0, 2.0])
        np.testing.assert_allclose(np.linalg.norm(f.reconstruct() - m), 1.0, rtol=1e-12)

    def test_residual_equals_tail_energy(self):
        rng = np.random.default_rng(4)
        m = rng.standard_normal((8, 6))
        full = svd_full(m)
        resid = np.linalg.norm(svd_truncated(m, 3).reconstruct() - m) ** 2
        np.testing.assert_allclose(resid, np.sum(full.S[3:] ** 2), atol=1e-10)

    def test_monotone_residual_in_k(self):
        rng = np.random.default_rng(5)
        m = rng.standard_normal((8, 6))
        resids = [np.linalg.norm(svd_truncated(m, k).reconstruct() - m) for k in range(1, 7)]
        assert np.all(np.diff(resids) <= 1e-12)

    def test_k_out_of_range(self):
        with pytest.raises(ValueError):
            svd_truncated(np.eye(3), 0)
        with pytest.raises(ValueError):
            svd_truncated(np.eye(3), 4)


class TestSvdRandomized:
    def test_exact_rank_two(self):
        rng = np.random.default_rng(6)
        m = planted_spectrum(rng, 30, 20, [4.0, 1.5])
        f = svd_randomized(m, 2, seed=9)
        ref = svd_full(m)
        np.testing.assert_allclose(f.S, ref.S[:2], rtol=1e-8)

    def test_rank_one_outer_product(self):
        rng = np.random.default_rng(7)
        b1 = rng.standard_normal(12)
        b2 = rng.standard_normal(15)
        m = np.outer(b2, b1)
        f = svd_randomized(m, 1, seed=1)
        np.testing.assert_allclose(f.S[0], np.linalg.norm(b1) * np.linalg.norm(b2), rtol=1e-10)
        # factor recovered up to the shared sign convention
        ref = svd_full(m)
        np.testing.assert_allclose(f.U[:, 0], ref.U[:, 0], atol=1e-8)

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(8)
        m = rng.standard_normal((25, 18))
        a = svd_randomized(m, 3, seed=42)
        b = svd_randomized(m, 3, seed=42)
        assert np.array_equal(a.U, b.U)
        assert np.array_equal(a.S, b.S)
        assert np.array_equal(a.V, b.V)

    def test_range_violation(self):
        with pytest.raises(ValueError):
            svd_randomized(np.eye(8), 5, oversample=10)


class TestWeyl:
    def test_perturbation_bound(self):
        rng = np.random.default_rng(9)
        m = rng.standard_normal((10, 8))
        delta = 1e-3 * rng.standard_normal((10, 8))
        s0 = svd_full(m).S
        s1 = svd_full(m + delta).S
        bound = np.linalg.norm(delta, 2) + 1e-10
        assert np.all(np.abs(s1 - s0) <= bound)


class TestOlsSolve:
    def test_identity_design(self):
        rng = np.random.default_rng(10)
        y = rng.standard_normal((6, 3))
        np.testing.assert_allclose(ols_solve(np.eye(6), y), y, atol=1e-12)

    def test_noiseless_recovery(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((40, 4))
        nu_t = rng.standard_normal((4, 9))
        y = x @ nu_t
        np.testing.assert_allclose(ols_solve(x, y), nu_t, rtol=1e-8)

    def test_normal_equations_oracle(self):
        # independent oracle: explicit 2x2 inverse of X'X
        x = np.array([[1.0, 2.0], [0.5, -1.0], [2.0, 0.3]])
        y = np.array([[1.0], [2.0], [3.0]])
        xtx = x.T @ x
        det = xtx[0, 0] * xtx[1, 1] - xtx[0, 1] * xtx[1, 0]
        inv = np.array([[xtx[1, 1], -xtx[0, 1]], [-xtx[1, 0], xtx[0, 0]]]) / det
        np.testing.assert_allclose(ols_solve(x, y), inv @ (x.T @ y), rtol=1e-12)

    def test_residual_postcondition(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((30, 3))
        y = rng.standard_normal((30, 5))
        b = ols_solve(x, y)
        lhs = x.T @ x @ b - x.T @ y
        assert np.max(np.abs(lhs)) <= 1e-8 * np.max(np.abs(x.T @ y))

    def test_noise_additivity(self):
        # ols(X, X nu' + E) = nu' + ols(X, E)
        rng = np.random.default_rng(13)
        x = rng.standard_normal((50, 4))
        nu_t = rng.standard_normal((4, 6))
        e = rng.standard_normal((50, 6))
        lhs = ols_solve(x, x @ nu_t + e)
        rhs = nu_t + ols_solve(x, e)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_singular_design(self):
        x = np.ones((5, 2))  # rank 1
        with pytest.raises(SingularDesignError) as err:
            ols_solve(x, np.ones((5, 1)))
        assert err.value.rcond is not None

    def test_underdetermined(self):
        with pytest.raises(DimensionError):
            ols_solve(np.ones((2, 3)), np.ones((2, 1)))


class TestSinTheta:
    def test_identical_subspaces(self):
        rng = np.random.default_rng(14)
        w, _ = np.linalg.qr(rng.standard_normal((6, 2)))
        assert sin_theta(w, w) == pytest.approx(0.0, abs=1e-10)

    def test_orthogonal_lines(self):
        e1 = np.array([[1.0], [0.0]])
        e2 = np.array([[0.0], [1.0]])
        assert sin_theta(e1, e2) == pytest.approx(1.0)

    def test_pi_over_six(self):
        theta = np.pi / 6
        w1 = np.array([[1.0], [0.0]])
        w2 = np.array([[np.cos(theta)], [np.sin(theta)]])
        assert sin_theta(w1, w2) == pytest.approx(0.5, abs=1e-12)

    def test_symmetric_and_basis_invariant(self):
        rng = np.random.default_rng(15)
        w1, _ = np.linalg.qr(rng.standard_normal((8, 3)))
        w2, _ = np.linalg.qr(rng.standard_normal((8, 3)))
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        d12 = sin_theta(w1, w2)
        assert abs(d12 - sin_theta(w2, w1)) <= 1e-10
        assert abs(d12 - sin_theta(w1 @ q, w2)) <= 1e-10
        assert abs(d12 - sin_theta(w1, w2 @ q)) <= 1e-10

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            sin_theta(2.0 * np.eye(3)[:, :2], np.eye(3)[:, :2])


class TestGramSchmidt:
    def test_orthogonalizes(self):
        rng = np.random.default_rng(16)
        m = rng.standard_normal((10, 4))
        g = gram_schmidt(m)
        gram = g.T @ g
        assert np.max(np.abs(gram - np.diag(np.diag(gram)))) <= 1e-10

    def test_normalized(self):
        rng = np.random.default_rng(17)
        m = rng.standard_normal((10, 4))
        g = gram_schmidt(m, normalize=True)
        np.testing.assert_allclose(g.T @ g, np.eye(4), atol=1e-10)
