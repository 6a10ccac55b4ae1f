import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zfnad.features import (
    SHRINKAGE,
    FeatureSet,
    GaussianFit,
    baseline_embed,
    embed_batch,
    fit_gaussian,
    frechet_distance,
    make_embedder,
    perceptual_mse,
    sqrtm_psd,
)
from zfnad.tensor import ImageTensor, write_native

from conftest import gray


def g1(mu, var):
    return GaussianFit(np.array([mu], float), np.array([[var]], float))


def random_spd(rng, d):
    a = rng.normal(size=(d, d))
    return a @ a.T + 0.1 * np.eye(d)


class TestBaselineEmbed:
    def test_constant_patch(self):
        fs = baseline_embed(gray(np.full((8, 8), 0.3)))
        c = np.float64(np.float32(0.3))
        assert fs.vectors.shape == (16, 6)
        assert np.array_equal(fs.vectors, np.tile([c, 0, 0, 0, c, c], (16, 1)))

    def test_grid_size_small_patch(self):
        assert baseline_embed(gray(np.zeros((3, 3)))).vectors.shape == (9, 6)
        assert baseline_embed(gray(np.zeros((2, 16)))).vectors.shape == (8, 6)

    def test_deterministic(self):
        x = np.random.default_rng(0).random((12, 12))
        assert np.array_equal(baseline_embed(gray(x)).vectors, baseline_embed(gray(x.copy())).vectors)

    def test_vertical_step_edge(self):
        # cells are 2 px wide; the step between columns 2 and 3 lies inside cell column 1
        x = np.zeros((8, 8))
        x[:, 3:] = 1.0
        v = baseline_embed(gray(x)).vectors.reshape(4, 4, 6)
        grad_h = v[:, :, 2]
        # one horizontal step per row inside a 2-wide cell, and it is the full edge
        assert np.all(grad_h[:, 1] == 1.0)
        assert np.all(grad_h[:, [0, 2, 3]] == 0.0)
        assert np.all(v[:, :, 3] == 0.0)

    def test_translation_consistent(self):
        rng = np.random.default_rng(4)
        big = gray(rng.random((20, 20)))
        patch = big.crop(5, 7, 8, 8)
        assert np.array_equal(baseline_embed(patch).vectors,
                              embed_batch(big.gray()[5:13, 7:15])[0])

    def test_empty(self):
        with pytest.raises(ValueError):
            embed_batch(np.zeros((1, 0, 3)))


class TestFitGaussian:
    def test_single_vector(self):
        fit = fit_gaussian(FeatureSet(np.array([[0.5, 2.0, -1.0]])))
        assert np.array_equal(fit.mean, [0.5, 2.0, -1.0])
        assert np.array_equal(fit.covariance, SHRINKAGE * np.eye(3))

    def test_two_vectors_n_denominator(self):
        fit = fit_gaussian(FeatureSet(np.array([[0.0, 0.0], [2.0, 0.0]])))
        assert np.array_equal(fit.mean, [1.0, 0.0])
        assert np.allclose(fit.covariance, np.diag([1.0, 0.0]) + SHRINKAGE * np.eye(2), atol=1e-15, rtol=0)

    def test_diagonal_when_few_samples(self):
        fit = fit_gaussian(FeatureSet(np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])))
        off = fit.covariance - np.diag(np.diag(fit.covariance))
        assert not off.any()

    def test_monte_carlo_mean(self):
        rng = np.random.default_rng(11)
        sigma = np.array([1.0, 2.0])
        x = rng.normal([3.0, -1.0], sigma, size=(100, 2))
        fit = fit_gaussian(FeatureSet(x))
        assert np.all(np.abs(fit.mean - [3.0, -1.0]) < 3 * sigma / 10)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 30), st.integers(1, 6))
    def test_covariance_symmetric_psd(self, seed, n, d):
        x = np.random.default_rng(seed).normal(size=(n, d))
        c = fit_gaussian(FeatureSet(x)).covariance
        assert np.max(np.abs(c - c.T)) <= 1e-12
        assert np.linalg.eigvalsh(c).min() >= 0

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            FeatureSet(np.array([[np.nan]]))


class TestFrechet:
    def test_identical(self):
        a = fit_gaussian(FeatureSet(np.random.default_rng(0).normal(size=(20, 4))))
        assert frechet_distance(a, a) == 0.0

    def test_closed_form_mean_shift(self):
        assert abs(frechet_distance(g1(0, 1), g1(3, 1)) - 9.0) <= 1e-9

    def test_closed_form_variance(self):
        assert abs(frechet_distance(g1(0, 1), g1(0, 4)) - 1.0) <= 1e-9

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 10), st.floats(0.01, 10))
    def test_one_dim_closed_form(self, m1, m2, v1, v2):
        expected = (m1 - m2) ** 2 + (np.sqrt(v1) - np.sqrt(v2)) ** 2
        assert frechet_distance(g1(m1, v1), g1(m2, v2)) == pytest.approx(expected, rel=1e-9, abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            frechet_distance(g1(0, 1), GaussianFit(np.zeros(2), np.eye(2)))

    def test_nonfinite(self):
        with pytest.raises(ValueError):
            frechet_distance(g1(0, 1), g1(np.inf, 1))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 6))
    def test_symmetric_nonnegative(self, seed, d):
        rng = np.random.default_rng(seed)
        a = GaussianFit(rng.normal(size=d), random_spd(rng, d))
        b = GaussianFit(rng.normal(size=d), random_spd(rng, d))
        ab, ba = frechet_distance(a, b), frechet_distance(b, a)
        assert ab == ba
        assert ab >= 0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 5))
    def test_increases_with_mean_gap(self, seed, d):
        rng = np.random.default_rng(seed)
        cov_a, cov_b = random_spd(rng, d), random_spd(rng, d)
        direction = rng.normal(size=d)
        direction /= np.linalg.norm(direction)
        vals = [frechet_distance(GaussianFit(np.zeros(d), cov_a), GaussianFit(t * direction, cov_b))
                for t in (0.0, 0.5, 1.0, 2.0, 4.0)]
        assert all(x < y for x, y in zip(vals, vals[1:]))

    def test_sqrtm_squares_back(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            m = random_spd(rng, int(rng.integers(1, 12)))
            r = sqrtm_psd(m)
            assert np.linalg.norm(r @ r - m, "fro") <= 1e-8
            assert np.array_equal(r, r.T) or np.max(np.abs(r - r.T)) <= 1e-12


class TestPerceptual:
    def test_identity(self):
        x = gray(np.random.default_rng(1).random((10, 10)))
        assert perceptual_mse(x, x) == 0.0

    def test_constants_closed_form(self):
        c1, c2 = np.float32(0.2), np.float32(0.7)
        got = perceptual_mse(gray(np.full((8, 8), c1)), gray(np.full((8, 8), c2)))
        # each cell vector (c, 0, 0, 0, c, c): three of six entries differ by c1 - c2
        expected = 3 * (float(c1) - float(c2)) ** 2 / 6
        assert got == pytest.approx(expected, rel=1e-12)

    def test_external_identity_and_missing(self, tmp_path):
        feats = np.random.default_rng(2).random((5, 7)).astype(np.float32)
        write_native(tmp_path / "a.feat", feats)
        write_native(tmp_path / "b.feat", feats)
        emb = make_embedder("external", str(tmp_path))
        a = ImageTensor(np.zeros((4, 4), np.float32), {"path": "/data/a.png"})
        b = ImageTensor(np.ones((4, 4), np.float32), {"path": "/data/b.png"})
        assert perceptual_mse(a, b, emb) == 0.0
        c = ImageTensor(np.ones((4, 4), np.float32), {"path": "/data/c.png"})
        with pytest.raises(FileNotFoundError):
            perceptual_mse(a, c, emb)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            perceptual_mse(gray(np.zeros((4, 4))), gray(np.zeros((4, 5))))

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            make_embedder("vgg")
