"""Seeded generators: coefficients, designs, noise models, datasets."""

import numpy as np
import pytest

from kroprofac.estimator import predict
from kroprofac.simgen import (
    Dataset,
    NoiseModelSpec,
    gen_coefficients,
    gen_dataset,
    gen_design,
    gen_noise,
    noise_chunks,
)
from kroprofac.tensor_core import Dims, vec


class TestGenCoefficients:
    def test_d1_entries_look_standard_normal(self):
        # CLT bound: |sample mean| <= 4 / sqrt(p1*q1) at p1*q1 = 10000
        dims = Dims(2500, 2500, 4, 4)
        coeffs = gen_coefficients(dims, 1, seed=0)
        b1 = coeffs.factors[0][0]
        assert abs(b1.mean()) <= 4.0 / np.sqrt(b1.size)
        # with balanced factor sizes the norm-matching rescale is a ~1%
        # effect, so the entry variance stays near 1
        assert 0.9 <= b1.var() <= 1.1

    def test_d2_orthogonality(self):
        dims = Dims(6, 5, 2, 3)
        coeffs = gen_coefficients(dims, 2, seed=1)
        (b1a, b2a), (b1b, b2b) = coeffs.factors
        assert abs(vec(b1a) @ vec(b1b)) <= 1e-10
        assert abs(vec(b2a) @ vec(b2b)) <= 1e-10

    def test_norm_matching_and_sigma(self):
        dims = Dims(6, 5, 2, 3)
        coeffs = gen_coefficients(dims, 3, seed=2)
        for k, (b1, b2) in enumerate(coeffs.factors):
            np.testing.assert_allclose(np.linalg.norm(b1), np.linalg.norm(b2), rtol=1e-12)
            np.testing.assert_allclose(
                np.linalg.norm(b1), np.sqrt(coeffs.sigma[k]), rtol=1e-12
            )
        assert np.all(np.diff(coeffs.sigma) <= 0)

    def test_deterministic(self):
        dims = Dims(4, 4, 2, 2)
        a = gen_coefficients(dims, 2, seed=33)
        b = gen_coefficients(dims, 2, seed=33)
        for (x1, x2), (y1, y2) in zip(a.factors, b.factors):
            assert np.array_equal(x1, y1)
            assert np.array_equal(x2, y2)

    def test_d_out_of_range(self):
        with pytest.raises(ValueError):
            gen_coefficients(Dims(2, 2, 1, 1), 3, seed=0)


class TestGenDesign:
    def test_shape(self):
        x = gen_design(7, Dims(3, 3, 2, 5), seed=0)
        assert x.shape == (7, 10)

    def test_variance_concentration(self):
        x = gen_design(1000, Dims(2, 2, 5, 2), seed=1)
        assert x.size >= 10**4
        assert 0.9 <= x.var() <= 1.1

    def test_distinct_seeds_distinct_draws(self):
        d = Dims(2, 2, 2, 2)
        assert not np.array_equal(gen_design(5, d, seed=1), gen_design(5, d, seed=2))


class TestGenNoise:
    def test_identity_lag1_autocorrelation(self):
        dims = Dims(25, 20, 1, 1)  # p1*p2 = 500
        e = gen_noise(NoiseModelSpec.identity(), 250, dims, seed=3)
        flat = e.ravel()
        assert flat.size >= 10**5
        r = np.corrcoef(flat[:-1], flat[1:])[0, 1]
        assert abs(r) <= 0.02

    def test_ar1_lag1_autocorrelation(self):
        dims = Dims(500, 250, 1, 1)  # rows of length 125000
        e = gen_noise(NoiseModelSpec.ar1(0.9), 2, dims, seed=4)
        row = e[0]
        r = np.corrcoef(row[:-1], row[1:])[0, 1]
        assert 0.88 <= r <= 0.92
        assert 0.9 <= row.var() <= 1.1  # stationary marginal variance 1

    def test_banded_b0_variances(self):
        from kroprofac.simgen import _banded_structure

        dims = Dims(10, 5, 1, 1)
        spec = NoiseModelSpec.banded(0, structure_seed=77)
        e = gen_noise(spec, 20000, dims, seed=5)
        bands = _banded_structure(0, 50, 77)
        expected = bands[0] ** 2
        got = e.var(axis=0)
        np.testing.assert_allclose(got, expected, rtol=0.10)

    def test_banded_structure_fixed_across_replicates(self):
        dims = Dims(4, 4, 1, 1)
        spec = NoiseModelSpec.banded(2, structure_seed=9)
        e1 = gen_noise(spec, 500, dims, seed=100)
        e2 = gen_noise(spec, 500, dims, seed=200)
        # same L: per-coordinate variances agree within Monte Carlo error
        np.testing.assert_allclose(e1.var(axis=0), e2.var(axis=0), rtol=0.5)

    def test_t5_heavy_tails(self):
        dims = Dims(20, 20, 1, 1)
        e = gen_noise(NoiseModelSpec.t5(), 300, dims, seed=6)
        # raw t5 variance is 5/3, not normalized away
        assert 1.5 <= e.var() <= 1.9

    def test_chunked_equals_one_shot(self):
        dims = Dims(6, 7, 1, 1)
        for spec in (NoiseModelSpec.identity(), NoiseModelSpec.ar1(0.6),
                     NoiseModelSpec.banded(3, structure_seed=1), NoiseModelSpec.t5()):
            full = gen_noise(spec, 23, dims, seed=8)
            chunks = np.concatenate(
                [b for _, b in noise_chunks(spec, 23, dims, seed=8, chunk_rows=5)], axis=0
            )
            assert np.array_equal(full, chunks), spec.kind

    def test_invalid_specs(self):
        with pytest.raises(ValueError):
            NoiseModelSpec.ar1(1.0)
        with pytest.raises(ValueError):
            NoiseModelSpec(kind="banded", bandwidth=-1)
        with pytest.raises(ValueError):
            NoiseModelSpec(kind="cauchy")


class TestGenDataset:
    def test_zero_noise_exact_model(self):
        dims = Dims(4, 3, 2, 2)
        data, coeffs = gen_dataset(dims, 2, 15, None, coef_seed=1, sample_seed=2)
        np.testing.assert_allclose(data.Y, data.X @ coeffs.nu().T, atol=1e-12)

    def test_rows_match_predict_oracle(self):
        dims = Dims(4, 3, 2, 2)
        spec = NoiseModelSpec.identity()
        data, coeffs = gen_dataset(dims, 1, 10, spec, coef_seed=3, sample_seed=4)
        e = gen_noise(spec, 10, dims, seed=4)
        for i in range(10):
            xi = data.X[i].reshape(dims.q2, dims.q1).T
            want = vec(predict(coeffs, xi)) + e[i]
            np.testing.assert_allclose(data.Y[i], want, atol=1e-10)

    def test_reproducible_end_to_end(self):
        dims = Dims(3, 3, 2, 2)
        spec = NoiseModelSpec.ar1(0.5)
        d1, c1 = gen_dataset(dims, 1, 8, spec, coef_seed=5, sample_seed=6)
        d2, c2 = gen_dataset(dims, 1, 8, spec, coef_seed=5, sample_seed=6)
        assert np.array_equal(d1.X, d2.X)
        assert np.array_equal(d1.Y, d2.Y)
        assert d1.seed_record == d2.seed_record

    def test_dataset_shape_validation(self):
        with pytest.raises(Exception):
            Dataset(dims=Dims(2, 2, 2, 2), X=np.ones((5, 4)), Y=np.ones((4, 4)))


class TestBandedDiagRecording:
    def test_sigma_diag_max_matches_monte_carlo(self):
        from kroprofac.simgen import banded_sigma_diag_max

        dims = Dims(6, 5, 1, 1)
        spec = NoiseModelSpec.banded(3, structure_seed=21)
        recorded = banded_sigma_diag_max(spec, dims)
        assert np.isfinite(recorded) and recorded > 0
        e = gen_noise(spec, 40000, dims, seed=22)
        np.testing.assert_allclose(e.var(axis=0).max(), recorded, rtol=0.1)

    def test_recorded_in_dataset(self):
        dims = Dims(3, 3, 2, 2)
        spec = NoiseModelSpec.banded(1, structure_seed=5)
        data, _ = gen_dataset(dims, 1, 6, spec, coef_seed=1, sample_seed=2)
        assert "sigma_diag_max" in data.seed_record["noise"]
