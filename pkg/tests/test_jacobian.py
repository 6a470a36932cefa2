import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from oracles import gram_log_volume, normal_logpdf_sum
from ttjac.errors import ConfigError, DegenerateJacobianError, ParameterError, ShapeError
from ttjac.jacobian import (
    FeatureMapSpec, GeneratorSpec, build_sample_set, generator_preset, jacobian, jacobian_batch,
    log_prior, log_volume, sample_latents, score, score_batch, two_mode_generator,
)
from ttjac.grid import build_equal_mass_grid, quantize

IDENT = FeatureMapSpec.identity()


def test_log_prior_origin():
    assert log_prior(np.zeros(2)) == pytest.approx(-1.8378770664093453, abs=1e-14)


def test_log_prior_batch_matches_oracle(rng):
    z = rng.normal(size=(20, 5))
    np.testing.assert_allclose(log_prior(z), [normal_logpdf_sum(r) for r in z], rtol=1e-13)


class TestJacobian:
    def test_affine_is_a(self, rng):
        a = rng.normal(size=(5, 3))
        gen = GeneratorSpec.affine(a)
        np.testing.assert_allclose(jacobian(gen, IDENT, rng.normal(size=3)), a, atol=1e-15)

    @pytest.mark.parametrize("activation", ["tanh", "softplus"])
    def test_mlp_exact_vs_fd(self, rng, activation):
        gen = GeneratorSpec.random_mlp(4, hidden=(16, 8), activation=activation, seed=3)
        feat = FeatureMapSpec.mlp_head(gen.n_out, 6, seed=1)
        for _ in range(10):
            z = rng.normal(size=4)
            exact = jacobian(gen, feat, z)
            fd = jacobian(gen, feat, z, method="fd")
            assert np.max(np.abs(exact - fd)) < 1e-6

    def test_batch_matches_single(self, rng):
        gen = GeneratorSpec.random_mlp(3, seed=0)
        z = rng.normal(size=(7, 3))
        jb = jacobian_batch(gen, IDENT, z)
        for i in range(7):
            np.testing.assert_allclose(jb[i], jacobian(gen, IDENT, z[i]), atol=1e-14)

    def test_projection_chain_rule(self, rng):
        a = rng.normal(size=(6, 3))
        p = rng.normal(size=(4, 6))
        j = jacobian(GeneratorSpec.affine(a), FeatureMapSpec.projection(p, scale=2.0), rng.normal(size=3))
        np.testing.assert_allclose(j, 2.0 * p @ a, atol=1e-13)

    def test_bad_method_and_shape(self):
        gen = GeneratorSpec.affine(np.eye(2))
        with pytest.raises(ParameterError):
            jacobian(gen, IDENT, np.zeros(2), method="complex-step")
        with pytest.raises(ShapeError):
            jacobian(gen, IDENT, np.zeros(3))


class TestLogVolume:
    def test_scaled_identity(self):
        assert log_volume(2 * np.eye(2)) == pytest.approx(2 * math.log(2), abs=1e-14)

    def test_rectangular_vs_gram(self, rng):
        for _ in range(20):
            j = rng.normal(size=(8, 5))
            assert log_volume(j) == pytest.approx(gram_log_volume(j), abs=1e-8)

    def test_degenerate_reports_sigmas(self):
        j = np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]])
        with pytest.raises(DegenerateJacobianError) as err:
            log_volume(j)
        assert err.value.sigma_max > 0
        assert err.value.sigma_min <= 1e-10 * err.value.sigma_max

    def test_wide_rejected(self):
        with pytest.raises(ShapeError):
            log_volume(np.ones((2, 3)))


class TestScore:
    @pytest.mark.parametrize("d", [2, 5, 10])
    def test_affine_matches_gaussian_density(self, rng, d):
        gen = GeneratorSpec.random_affine(d, seed=d)
        a, b = gen.layers[0]
        dist = multivariate_normal(mean=b, cov=a @ a.T)
        z = rng.normal(size=(10, d))
        s = score_batch(gen, IDENT, z)
        np.testing.assert_allclose(s.score, dist.logpdf(gen(z)), atol=1e-8, rtol=0)

    def test_components(self, rng):
        gen = GeneratorSpec.random_mlp(3, seed=2)
        z = rng.normal(size=3)
        r = score(gen, IDENT, z)
        assert r.score == pytest.approx(r.log_prior - r.log_volume, abs=1e-14)
        assert r.sigma_min <= r.sigma_max

    def test_degenerate_row_reported(self, rng):
        a = np.array([[1.0, 1.0], [1.0, 1.0]])
        with pytest.raises(DegenerateJacobianError) as err:
            score_batch(GeneratorSpec("affine", layers=((a, np.zeros(2)),)), IDENT,
                        rng.normal(size=(4, 2)), offset=10)
        assert err.value.sample == 10

    def test_orthogonal_feature_invariance(self, rng):
        gen = GeneratorSpec.random_mlp(3, seed=5)
        q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
        z = rng.normal(size=(50, 3))
        base = score_batch(gen, IDENT, z).score
        rotated = score_batch(gen, FeatureMapSpec.projection(q), z).score
        np.testing.assert_allclose(rotated, base, atol=1e-10)

    def test_feature_scale_shifts_uniformly(self, rng):
        gen = GeneratorSpec.random_mlp(3, seed=6)
        z = rng.normal(size=(100, 3))
        base = score_batch(gen, IDENT, z).score
        scaled = score_batch(gen, FeatureMapSpec.identity(scale=3.0), z).score
        np.testing.assert_allclose(base - scaled, 3 * math.log(3.0), atol=1e-10)
        assert np.array_equal(np.argsort(base), np.argsort(scaled))

    def test_probability_conservation_2d(self):
        gen = GeneratorSpec.affine(np.array([[1.3, 0.4], [-0.2, 0.8]]), np.array([0.5, -1.0]))
        a, b = gen.layers[0]
        h = 0.02
        xs = np.arange(-9.0, 9.0, h) + h / 2
        gx, gy = np.meshgrid(xs + b[0], xs + b[1], indexing="ij")
        x = np.column_stack([gx.ravel(), gy.ravel()])
        z = np.linalg.solve(a, (x - b).T).T
        total = np.exp(score_batch(gen, IDENT, z).score).sum() * h * h
        assert total == pytest.approx(1.0, abs=1e-3)


class TestSampling:
    def test_latent_rows_independent_of_chunking(self):
        full = sample_latents(7, 10, 3)
        np.testing.assert_array_equal(sample_latents(7, 4, 3, start=6), full[6:])

    def test_deterministic_and_thread_independent(self, grid8):
        gen = GeneratorSpec.random_mlp(2, seed=1)
        a = build_sample_set(gen, IDENT, grid8, 5000, seed=3, threads=1)
        b = build_sample_set(gen, IDENT, grid8, 5000, seed=3, threads=4)
        np.testing.assert_array_equal(a.latents, b.latents)
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.indices, quantize(a.latents, grid8))
        assert a.generator_tag == gen.tag

    def test_seed_changes_latents(self, grid8):
        gen = GeneratorSpec.affine(np.eye(2))
        a = build_sample_set(gen, IDENT, grid8, 10, seed=0)
        b = build_sample_set(gen, IDENT, grid8, 10, seed=1)
        assert not np.array_equal(a.latents, b.latents)

    def test_uniform_fill(self):
        grid = build_equal_mass_grid(16)
        s = build_sample_set(GeneratorSpec.affine(np.eye(2)), IDENT, grid, 8000, seed=0)
        counts = np.bincount(s.indices[:, 0], minlength=16)
        assert np.all(np.abs(counts - 500) <= 4 * math.sqrt(500))

    def test_zero_samples_rejected(self, grid8):
        with pytest.raises(ParameterError):
            build_sample_set(GeneratorSpec.affine(np.eye(2)), IDENT, grid8, 0)


class TestSpecs:
    def test_generator_dict_round_trip(self):
        gen = GeneratorSpec.random_mlp(3, seed=4)
        back = GeneratorSpec.from_dict(gen.to_dict())
        z = np.random.default_rng(0).normal(size=(5, 3))
        np.testing.assert_array_equal(back(z), gen(z))

    def test_feature_dict_round_trip(self):
        feat = FeatureMapSpec.mlp_head(4, 3, seed=2)
        back = FeatureMapSpec.from_dict(feat.to_dict())
        x = np.random.default_rng(0).normal(size=(5, 4))
        np.testing.assert_array_equal(back.forward(x)[0], feat.forward(x)[0])

    def test_presets(self):
        assert generator_preset("affine", d=3).d == 3
        assert generator_preset("identity", d=2).tag == "identity"
        with pytest.raises(ConfigError):
            generator_preset("gan")

    def test_narrow_output_rejected(self):
        with pytest.raises(ShapeError):
            GeneratorSpec.affine(np.ones((1, 2)))

    def test_two_mode_shape(self):
        gen = two_mode_generator()
        x = gen(np.array([[-2.0, 0.5], [3.0, 0.5]]))
        assert abs(x[0, 0] + 2.0) < 1e-3
        assert x[1, 0] > 3.0 + 9.0 * 1.9
        np.testing.assert_allclose(x[:, 1], 0.5)
