import itertools

import numpy as np
import pytest

from oracles import dense_pair_mean
from ttjac.errors import ParameterError
from ttjac.grid import build_equal_mass_grid
from ttjac.probe import (
    pairwise_matrix_from_samples, pairwise_matrix_from_tt, random_pairs, spectrum,
    suggest_rank, write_spectrum_csv,
)
from ttjac.samples import SampleSet
from ttjac.tt import tt_eval_batch, tt_materialize, tt_random


def exhaustive(t, grid):
    idx = np.array(list(itertools.product(range(grid.n_cells), repeat=t.d)))
    return SampleSet(grid.centers[idx], idx, tt_eval_batch(t, idx), grid)


class TestExact:
    @pytest.mark.parametrize("r", [1, 2, 3])
    def test_rank_bound(self, r):
        t = tt_random([8] * 4, [1, r, r, r, 1], seed=r)
        for k1, k2 in itertools.combinations(range(4), 2):
            sv = spectrum(pairwise_matrix_from_tt(t, k1, k2)).singular_values
            assert sv[r:].max(initial=0.0) / sv[0] < 1e-10

    def test_matches_dense_oracle(self):
        t = tt_random([3, 4, 5, 2], [1, 2, 3, 2, 1], seed=9)
        dense = tt_materialize(t)
        for k1, k2 in itertools.combinations(range(4), 2):
            pm = pairwise_matrix_from_tt(t, k1, k2)
            np.testing.assert_allclose(pm.c, dense_pair_mean(dense, k1, k2), atol=1e-13)
            assert pm.counts is None

    def test_swap_gives_transpose(self):
        t = tt_random([5] * 3, [1, 2, 2, 1], seed=1)
        np.testing.assert_array_equal(pairwise_matrix_from_tt(t, 2, 0).c,
                                      pairwise_matrix_from_tt(t, 0, 2).c.T)

    @pytest.mark.parametrize("pair", [(0, 0), (-1, 2), (0, 3)])
    def test_bad_pairs(self, pair):
        t = tt_random([4] * 3, [1, 2, 2, 1], seed=0)
        with pytest.raises(ParameterError):
            pairwise_matrix_from_tt(t, *pair)


class TestEmpirical:
    def test_exhaustive_enumeration_matches_exact(self):
        grid = build_equal_mass_grid(5)
        t = tt_random([5] * 3, [1, 3, 2, 1], seed=4)
        s = exhaustive(t, grid)
        for k1, k2 in [(0, 1), (0, 2), (2, 1)]:
            emp = pairwise_matrix_from_samples(s, k1, k2)
            np.testing.assert_allclose(emp.c, pairwise_matrix_from_tt(t, k1, k2).c, atol=1e-12)
            assert np.all(emp.counts == 5)

    def test_constant_values_rank_one(self, grid8, rng):
        idx = rng.integers(0, 8, (3000, 3))
        s = SampleSet(grid8.centers[idx], idx, np.full(3000, -1.25), grid8)
        pm = pairwise_matrix_from_samples(s, 0, 1)
        assert np.all(pm.c == -1.25)
        sp = spectrum(pm)
        assert sp.normalized_cumsum[0] == pytest.approx(1.0, abs=1e-12)
        assert suggest_rank([sp]) == 1

    def test_noisy_rank_two(self, grid8, rng):
        u, v = rng.normal(size=(2, 8)), rng.normal(size=(2, 8))
        idx = rng.integers(0, 8, (200_000, 2))
        vals = np.sum(u[:, idx[:, 0]] * v[:, idx[:, 1]], axis=0) + 0.01 * rng.normal(size=200_000)
        s = SampleSet(grid8.centers[idx], idx, vals, grid8)
        sv = spectrum(pairwise_matrix_from_samples(s, 0, 1)).singular_values
        assert sv[2] / sv[0] < 0.05

    def test_empty_cells_filled_with_mean(self, grid8):
        idx = np.array([[0, 0, 0], [1, 1, 1], [1, 1, 2]])
        vals = np.array([1.0, 2.0, 6.0])
        pm = pairwise_matrix_from_samples(SampleSet(grid8.centers[idx], idx, vals, grid8), 0, 1)
        assert pm.c[0, 0] == 1.0 and pm.c[1, 1] == 4.0
        assert pm.c[3, 5] == 3.0 and pm.counts[3, 5] == 0


class TestSpectrum:
    def test_identity(self):
        sp = spectrum(np.eye(4))
        np.testing.assert_allclose(sp.normalized_cumsum, [0.25, 0.5, 0.75, 1.0], atol=1e-15)

    def test_rank_one(self, rng):
        sp = spectrum(np.outer(rng.normal(size=6), rng.normal(size=6)))
        assert sp.normalized_cumsum[0] == pytest.approx(1.0, abs=1e-12)

    def test_gram_eigenvalues(self, rng):
        c = rng.normal(size=(7, 7))
        eig = np.sort(np.linalg.eigvalsh(c.T @ c))[::-1]
        np.testing.assert_allclose(spectrum(c).singular_values, np.sqrt(np.maximum(eig, 0)), rtol=1e-10)

    def test_zero_matrix(self):
        sp = spectrum(np.zeros((3, 3)))
        assert np.all(sp.normalized_cumsum == 1.0)

    def test_cumsum_monotone_ends_at_one(self, rng):
        cs = spectrum(rng.normal(size=(16, 16))).normalized_cumsum
        assert np.all(np.diff(cs) >= 0) and cs[-1] == 1.0


class TestSuggestRank:
    def test_max_over_pairs(self):
        assert suggest_rank([spectrum(np.eye(4)), spectrum(np.diag([1.0, 0, 0, 0]))], 0.99) == 4
        assert suggest_rank([spectrum(np.diag([1.0, 1.0, 1e-6]))], 0.99) == 2

    def test_energy_one(self):
        assert suggest_rank([spectrum(np.diag([3.0, 2.0, 1.0]))], 1.0) == 3

    def test_validation(self):
        with pytest.raises(ParameterError):
            suggest_rank([])
        with pytest.raises(ParameterError):
            suggest_rank([spectrum(np.eye(2))], 0.0)


def test_random_pairs(rng):
    pairs = random_pairs(6, 10, rng)
    assert len(set(pairs)) == 10 and all(a < b for a, b in pairs)
    assert random_pairs(3, 10, rng) == [(0, 1), (0, 2), (1, 2)]


def test_spectrum_csv(tmp_path):
    path = tmp_path / "s.csv"
    write_spectrum_csv(path, [((0, 2), spectrum(np.eye(2)))])
    assert path.read_text().splitlines() == ["pair,index,sigma,cumsum", "0-2,0,1.0,0.5", "0-2,1,1.0,1.0"]
