import math

import numpy as np
import pytest

from oracles import knn_pr_bruteforce
from ttjac.errors import ConfigError, ParameterError
from ttjac.fit import anova_to_tt, fit_anova1, standardization, standardize
from ttjac.grid import build_equal_mass_grid
from ttjac.jacobian import FeatureMapSpec, GeneratorSpec, build_sample_set
from ttjac.model import ScoreModel
from ttjac.samples import SampleSet
from ttjac.truncation import (
    EXACT_SCORE, LATENT_NORM, TT_SCORE, FilterCriterion, criterion_statistic, filter_population,
    fraction_threshold, kept_disagreement, knn_precision_recall, knn_radii, sweep_tradeoff,
    write_curve_csv,
)


@pytest.fixture(scope="module")
def fitted():
    grid = build_equal_mass_grid(32)
    gen = GeneratorSpec.random_affine(3, seed=1)
    s = build_sample_set(gen, FeatureMapSpec.identity(), grid, 4000, seed=0)
    mean, std = standardization(s.values)
    model = ScoreModel(grid, anova_to_tt(fit_anova1(standardize(s, mean, std))), mean, std)
    return s, gen, model


class TestKnn:
    def test_identical_sets(self, rng):
        x = rng.normal(size=(60, 3))
        assert knn_precision_recall(x, x.copy(), k=3) == (1.0, 1.0)

    def test_displaced_set(self, rng):
        x = rng.normal(size=(60, 3))
        p, r = knn_precision_recall(x, x + 1000.0, k=3)
        assert p == 0.0 and r == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_bruteforce(self, seed):
        g = np.random.default_rng(seed)
        real = g.normal(size=(40, 2))
        gen = g.normal(loc=0.5, size=(35, 2))
        assert knn_precision_recall(real, gen, 3) == knn_pr_bruteforce(real, gen, 3)

    def test_radii_skip_self(self):
        pts = np.array([[0.0], [1.0], [3.0], [7.0]])
        np.testing.assert_array_equal(knn_radii(pts, 1), [1.0, 1.0, 2.0, 4.0])

    def test_k_too_large(self, rng):
        with pytest.raises(ParameterError):
            knn_precision_recall(rng.normal(size=(3, 2)), rng.normal(size=(10, 2)), k=3)
        with pytest.raises(ParameterError):
            knn_precision_recall(rng.normal(size=(10, 2)), rng.normal(size=(10, 2)), k=0)


class TestFilter:
    def test_minus_infinity_keeps_all(self, fitted):
        s, _, model = fitted
        assert filter_population(s, TT_SCORE, model, -math.inf).size == s.m
        assert filter_population(s, LATENT_NORM, None, math.inf).size == s.m

    def test_latent_norm_threshold(self, fitted):
        s, _, _ = fitted
        kept = filter_population(s, LATENT_NORM, None, 1.5)
        assert np.all(np.linalg.norm(s.latents[kept], axis=1) <= 1.5)
        assert np.all(np.diff(kept) > 0)

    def test_tt_needs_model(self, fitted):
        with pytest.raises(ConfigError):
            criterion_statistic(fitted[0], TT_SCORE, None)

    def test_requantizes_on_foreign_grid(self, fitted):
        s, _, model = fitted
        coarse = SampleSet.from_latents(s.latents[:100], s.values[:100], build_equal_mass_grid(5))
        np.testing.assert_array_equal(criterion_statistic(coarse, TT_SCORE, model),
                                      model.evaluate(s.latents[:100]))

    def test_unknown_criterion(self):
        with pytest.raises(ConfigError):
            FilterCriterion("density")

    def test_median_overlap(self, fitted):
        s, _, model = fitted
        tt = criterion_statistic(s, TT_SCORE, model)
        assert 1.0 - kept_disagreement(tt, s.values, 0.5) >= 0.95

    def test_fraction_threshold(self):
        stat = np.array([5.0, 1.0, 3.0, 2.0])
        assert fraction_threshold(stat, TT_SCORE, 0.5) == 3.0
        assert fraction_threshold(stat, LATENT_NORM, 0.5) == 2.0
        assert fraction_threshold(stat, TT_SCORE, 0.0) == math.inf


class TestSweep:
    def test_fractions_monotone_kept(self, fitted):
        s, gen, model = fitted
        real = np.random.default_rng(9).normal(size=(500, 3))
        fr = [1.0, 0.8, 0.6, 0.4]
        curves = sweep_tradeoff(s.subset(np.arange(500)), gen(s.latents[:500]), gen(real),
                                [TT_SCORE, LATENT_NORM, EXACT_SCORE], fractions=fr, model=model)
        for pts in curves.values():
            assert [p.kept_fraction for p in pts] == fr
        full = [(c[0].precision, c[0].recall) for c in curves.values()]
        assert len(set(full)) == 1  # f = 1 keeps everything for every criterion

    def test_deterministic(self, fitted, tmp_path):
        s, gen, model = fitted
        sub = s.subset(np.arange(300))
        real = gen(np.random.default_rng(1).normal(size=(300, 3)))
        paths = []
        for i in range(2):
            c = sweep_tradeoff(sub, gen(sub.latents), real, [TT_SCORE], fractions=[0.9, 0.5], model=model)
            paths.append(tmp_path / f"{i}.csv")
            write_curve_csv(paths[-1], c)
        assert paths[0].read_bytes() == paths[1].read_bytes()
        assert paths[0].read_text().startswith("criterion,threshold,kept_fraction,precision,recall")

    def test_thresholds_mode(self, fitted):
        s, gen, _ = fitted
        sub = s.subset(np.arange(200))
        c = sweep_tradeoff(sub, gen(sub.latents), gen(sub.latents), [LATENT_NORM],
                           thresholds={"latent_norm": [math.inf, 0.01]})
        assert len(c["latent_norm"]) == 1  # the tiny threshold keeps too few rows
        assert c["latent_norm"][0].precision == 1.0

    def test_argument_checks(self, fitted):
        s, gen, model = fitted
        with pytest.raises(ParameterError):
            sweep_tradeoff(s, gen(s.latents), gen(s.latents), [TT_SCORE], model=model)
        with pytest.raises(ParameterError):
            sweep_tradeoff(s, gen(s.latents[:10]), gen(s.latents), [TT_SCORE], fractions=[1.0], model=model)
        with pytest.raises(ConfigError):
            sweep_tradeoff(s.subset(np.arange(50)), gen(s.latents[:50]), gen(s.latents[:50]),
                           [TT_SCORE], fractions=[1.0])


def test_kept_disagreement():
    a = np.array([4.0, 3.0, 2.0, 1.0])
    assert kept_disagreement(a, a, 0.5) == 0.0
    assert kept_disagreement(a, -a, 0.5) == 1.0
    assert kept_disagreement(a, np.array([4.0, 1.0, 2.0, 3.0]), 0.5) == 0.5
