"""Rank estimation from pairwise-dependency matrices of a tensor."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError, ParameterError
from .samples import SampleSet
from .tt import TTTensor


@dataclass(frozen=True)
class PairwiseMatrix:
    """C[j_r, j_c]: mean of the tensor over every index except k1 and k2.

    ``counts`` holds the number of samples behind each entry, or None when C
    was computed exactly from TT cores.
    """

    k1: int
    k2: int
    c: np.ndarray
    counts: np.ndarray | None = None


@dataclass(frozen=True)
class Spectrum:
    singular_values: np.ndarray
    normalized_cumsum: np.ndarray


def _check_pair(d: int, k1: int, k2: int) -> None:
    if not (0 <= k1 < d and 0 <= k2 < d) or k1 == k2:
        raise ParameterError(f"invalid component pair ({k1}, {k2}) for d={d}")


def pairwise_matrix_from_tt(t: TTTensor, k1: int, k2: int) -> PairwiseMatrix:
    """Exact C from the cores: average every other core over its mode index
    and contract the chain. Components are 0-based; k1 > k2 gives the
    transpose of the (k2, k1) matrix."""
    _check_pair(t.d, k1, k2)
    if k1 > k2:
        pm = pairwise_matrix_from_tt(t, k2, k1)
        return PairwiseMatrix(k1, k2, pm.c.T.copy(), None)
    means = [c.mean(axis=1) for c in t.cores]

    def chain(lo, hi, size):
        out = np.eye(size)
        for k in range(lo, hi):
            out = out @ means[k]
        return out

    left = chain(0, k1, 1)  # (1, r_{k1-1})
    a = np.einsum("xr,rjs->js", left, t.cores[k1])  # (N, r_{k1})
    mid = chain(k1 + 1, k2, t.ranks[k1 + 1])  # (r_{k1}, r_{k2-1})
    right = np.eye(t.ranks[-1])
    for k in range(t.d - 1, k2, -1):
        right = means[k] @ right
    b = np.einsum("rjs,sx->rj", t.cores[k2], right)  # (r_{k2-1}, N)
    return PairwiseMatrix(k1, k2, a @ mid @ b, None)


def pairwise_matrix_from_samples(samples: SampleSet, k1: int, k2: int,
                                 n_cells: int | None = None) -> PairwiseMatrix:
    """Empirical C: cell means of the sample values grouped by (i_k1, i_k2).

    Empty cells are filled with the global sample mean and flagged with
    count 0.
    """
    _check_pair(samples.d, k1, k2)
    n = samples.grid.n_cells if n_cells is None else n_cells
    rows = samples.indices[:, k1]
    cols = samples.indices[:, k2]
    flat = rows * n + cols
    counts = np.bincount(flat, minlength=n * n).reshape(n, n)
    sums = np.bincount(flat, weights=samples.values, minlength=n * n).reshape(n, n)
    if not np.any(counts):
        raise InputError("no samples fall in any (k1, k2) cell")
    c = np.full((n, n), float(samples.values.mean()))
    filled = counts > 0
    c[filled] = sums[filled] / counts[filled]
    return PairwiseMatrix(k1, k2, c, counts)


def spectrum(pm) -> Spectrum:
    c = pm.c if isinstance(pm, PairwiseMatrix) else np.asarray(pm, dtype=np.float64)
    sv = np.linalg.svd(c, compute_uv=False)
    total = sv.sum()
    if total > 0:
        cum = np.cumsum(sv) / total
        cum = np.minimum(cum, 1.0)
        cum[-1] = 1.0
    else:
        cum = np.ones_like(sv)
    return Spectrum(sv, cum)


def suggest_rank(spectra: Sequence[Spectrum], energy: float = 0.99) -> int:
    """Smallest r with normalized_cumsum[r - 1] >= energy for every spectrum."""
    if not spectra:
        raise ParameterError("need at least one spectrum")
    if not 0.0 < energy <= 1.0:
        raise ParameterError("energy must lie in (0, 1]")
    best = 1
    for s in spectra:
        r = int(np.argmax(s.normalized_cumsum >= energy)) + 1
        best = max(best, r)
    return best


def random_pairs(d: int, count: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """``count`` distinct component pairs (k1 < k2), fewer if d is small."""
    all_pairs = [(a, b) for a in range(d) for b in range(a + 1, d)]
    if count >= len(all_pairs):
        return all_pairs
    pick = rng.choice(len(all_pairs), size=count, replace=False)
    return [all_pairs[i] for i in sorted(pick)]


def write_spectrum_csv(path, spectra: Sequence[tuple[tuple[int, int], Spectrum]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair", "index", "sigma", "cumsum"])
        for (k1, k2), s in spectra:
            for i, (sv, cs) in enumerate(zip(s.singular_values, s.normalized_cumsum)):
                w.writerow([f"{k1}-{k2}", i, repr(float(sv)), repr(float(cs))])
