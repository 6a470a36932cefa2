"""Fitting a TT to scattered grid samples: order-1 ANOVA and ALS refinement."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericalError, ParameterError, UnderdeterminedError
from .grid import Grid1D
from .samples import SampleSet
from .tt import TTTensor, tt_eval_batch

log = logging.getLogger(__name__)


class EmptyCellWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AnovaModel:
    """Additive model c0 + sum_k effects[k, i_k] with per-cell sample counts."""

    c0: float
    effects: np.ndarray  # (d, N)
    counts: np.ndarray  # (d, N)

    @property
    def d(self) -> int:
        return self.effects.shape[0]

    def predict(self, indices) -> np.ndarray:
        indices = np.atleast_2d(np.asarray(indices, dtype=np.int64))
        k = np.arange(self.d)
        return self.c0 + self.effects[k, indices].sum(axis=1)


def fit_anova1(samples: SampleSet, grid: Grid1D | None = None) -> AnovaModel:
    """Order-1 ANOVA by cell means.

    effects[k, i] is the mean of the values with i_k = i, minus the global
    mean. Cells without samples get effect 0 and raise EmptyCellWarning.
    """
    if samples is None or samples.m == 0:
        raise InputError("cannot fit ANOVA to an empty sample set")
    grid = samples.grid if grid is None else grid
    n = grid.n_cells
    d = samples.d
    if d < 2:
        raise InputError("ANOVA fit needs d >= 2")
    vals = samples.values
    c0 = float(vals.mean())
    centred = vals - c0
    effects = np.zeros((d, n))
    counts = np.zeros((d, n), dtype=np.int64)
    for k in range(d):
        col = samples.indices[:, k]
        counts[k] = np.bincount(col, minlength=n)
        sums = np.bincount(col, weights=centred, minlength=n)
        filled = counts[k] > 0
        effects[k, filled] = sums[filled] / counts[k, filled]
    empty = int(np.sum(counts == 0))
    if empty:
        warnings.warn(f"{empty} empty ANOVA cells set to effect 0", EmptyCellWarning, stacklevel=2)
    return AnovaModel(c0=c0, effects=effects, counts=counts)


def anova_to_tt(model: AnovaModel) -> TTTensor:
    """Exact rank-2 TT of c0 + sum_k f_k(i_k).

    Slices are [1, f_1(i)], [[1, f_k(i)], [0, 1]] and [f_d(i) + c0, 1]^T, so
    the running row vector is [1, partial sum].
    """
    d, n = model.effects.shape
    if d < 2:
        raise ParameterError("anova_to_tt needs d >= 2")
    f = model.effects
    first = np.zeros((1, n, 2))
    first[0, :, 0] = 1.0
    first[0, :, 1] = f[0]
    cores = [first]
    for k in range(1, d - 1):
        mid = np.zeros((2, n, 2))
        mid[0, :, 0] = 1.0
        mid[0, :, 1] = f[k]
        mid[1, :, 1] = 1.0
        cores.append(mid)
    last = np.zeros((2, n, 1))
    last[0, :, 0] = f[d - 1] + model.c0
    last[1, :, 0] = 1.0
    cores.append(last)
    return TTTensor(tuple(cores))


@dataclass(frozen=True)
class AlsConfig:
    rank: int = 4
    sweeps: int = 10
    ridge: float | None = None  # None: 1e-8 * (value RMS)^2
    seed: int = 0
    min_slice_samples: int | None = None  # None: number of slice unknowns
    tol: float = 1e-9

    def __post_init__(self):
        if self.rank < 1:
            raise ParameterError("ALS rank must be >= 1")
        if self.sweeps < 1:
            raise ParameterError("ALS sweeps must be >= 1")
        if self.ridge is not None and self.ridge < 0:
            raise ParameterError("ridge must be >= 0")


@dataclass
class FitReport:
    rmse: list[float] = field(default_factory=list)
    underdetermined_slices: list[int] = field(default_factory=list)
    flagged: list[tuple[int, int]] = field(default_factory=list)
    ridge: float = 0.0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sweep", "rmse", "underdetermined_slices"])
            for s, (r, u) in enumerate(zip(self.rmse, self.underdetermined_slices)):
                w.writerow([s, repr(float(r)), u])


def pad_tt(t: TTTensor, rank: int, noise: float, seed) -> TTTensor:
    """Embed ``t`` in a TT of uniform interior rank, filling new entries with noise."""
    rng = np.random.default_rng(seed)
    d = t.d
    ranks = [1] + [max(rank, r) for r in t.ranks[1:-1]] + [1]
    cores = []
    for k, c in enumerate(t.cores):
        new = noise * rng.standard_normal((ranks[k], c.shape[1], ranks[k + 1]))
        new[: c.shape[0], :, : c.shape[2]] = c
        cores.append(new)
    assert len(cores) == d
    return TTTensor(tuple(cores))


def _right_interfaces(cores, indices):
    """R[k] = G_{k+1}[i_{k+1}] ... G_d[i_d] per sample, shape (M, r_k)."""
    m = indices.shape[0]
    d = len(cores)
    right = [None] * d
    acc = np.ones((m, 1))
    right[d - 1] = acc
    for k in range(d - 1, 0, -1):
        slices = cores[k][:, indices[:, k], :].transpose(1, 0, 2)
        acc = np.einsum("brs,bs->br", slices, acc)
        right[k - 1] = acc
    return right


def _rmse(cores, indices, values) -> float:
    pred = tt_eval_batch(TTTensor(tuple(cores)), indices)
    return float(np.sqrt(np.mean((pred - values) ** 2)))


def fit_als(samples: SampleSet, init: TTTensor, cfg: AlsConfig = AlsConfig()):
    """Refine ``init`` by alternating least squares over cores 1..d.

    For core k and cell i the rows with i_k = i give a linear problem in
    vec(G_k[i]) whose design matrix is the row-wise Kronecker (face-splitting)
    product of left and right interface vectors. A ridge term lam * ||G_k[i]||^2
    regularises thin slices. After each solve the core is QR-orthogonalised
    and its R factor pushed into the next core, which leaves the tensor
    unchanged.

    Returns (tensor, FitReport). ``report.rmse[0]`` is the RMSE of ``init``,
    followed by one entry per completed sweep.
    """
    idx = samples.indices
    vals = samples.values
    m, d = idx.shape
    if init.d != d:
        raise ParameterError(f"init has {init.d} cores, samples have d={d}")
    n = init.mode_sizes[0]
    if any(s != n for s in init.mode_sizes):
        raise ParameterError("ALS expects equal mode sizes")
    if idx.max() >= n:
        raise ParameterError("sample indices exceed tensor mode size")

    rms = float(np.sqrt(np.mean(vals**2)))
    lam = 1e-8 * rms**2 if cfg.ridge is None else float(cfg.ridge)
    cores = [c.copy() for c in init.cores]
    report = FitReport(ridge=lam)

    rows_by_cell = []
    for k in range(d):
        order = np.argsort(idx[:, k], kind="stable")
        bounds = np.searchsorted(idx[order, k], np.arange(n + 1))
        rows_by_cell.append([order[bounds[i]:bounds[i + 1]] for i in range(n)])

    flagged = []
    for k in range(d):
        unknowns = cores[k].shape[0] * cores[k].shape[2]
        need = unknowns if cfg.min_slice_samples is None else cfg.min_slice_samples
        for i in range(n):
            count = len(rows_by_cell[k][i])
            if count == 0 and lam == 0.0:
                raise UnderdeterminedError(k, i)
            if count < need:
                flagged.append((k, i))
    report.flagged = flagged
    if flagged:
        log.info("%d slices have fewer samples than unknowns", len(flagged))

    report.rmse.append(_rmse(cores, idx, vals))
    report.underdetermined_slices.append(len(flagged))

    for sweep in range(cfg.sweeps):
        right = _right_interfaces(cores, idx)
        left = np.ones((m, 1))
        for k in range(d):
            rp, _, rn = cores[k].shape
            new = np.empty_like(cores[k])
            for i in range(n):
                rows = rows_by_cell[k][i]
                if len(rows) == 0:
                    new[:, i, :] = 0.0
                    continue
                # face-splitting product: row m is kron(left[m], right[m])
                design = (left[rows, :, None] * right[k][rows, None, :]).reshape(len(rows), rp * rn)
                target = vals[rows]
                if lam > 0.0:
                    design = np.vstack([design, np.sqrt(lam) * np.eye(rp * rn)])
                    target = np.concatenate([target, np.zeros(rp * rn)])
                sol, *_ = np.linalg.lstsq(design, target, rcond=None)
                if not np.all(np.isfinite(sol)):
                    raise NumericalError(f"non-finite ALS solution at core {k}, slice {i}")
                new[:, i, :] = sol.reshape(rp, rn)
            if k < d - 1 and rp * n >= rn:
                q, r = np.linalg.qr(new.reshape(rp * n, rn))
                new = q.reshape(rp, n, rn)
                cores[k + 1] = np.einsum("ab,bnc->anc", r, cores[k + 1])
            cores[k] = new
            slices = new[:, idx[:, k], :].transpose(1, 0, 2)
            left = np.einsum("br,brs->bs", left, slices)
        rmse = _rmse(cores, idx, vals)
        report.rmse.append(rmse)
        report.underdetermined_slices.append(len(flagged))
        log.debug("ALS sweep %d: rmse %.3e", sweep + 1, rmse)
        if report.rmse[-2] - rmse < cfg.tol:
            break
    return TTTensor(tuple(cores)), report


def als_init(samples: SampleSet, rank: int, seed=0, noise: float = 1e-3) -> TTTensor:
    """Default ALS start: the ANOVA TT padded with small noise up to ``rank``."""
    n = samples.grid.n_cells
    if rank < 2:
        from .tt import tt_random

        rng_seed = np.random.SeedSequence([int(seed), 1])
        base = tt_random([n] * samples.d, [1] * (samples.d + 1), rng_seed)
        scale = np.sqrt(np.mean(samples.values**2)) ** (1.0 / samples.d)
        return TTTensor(tuple(c * scale for c in base.cores))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyCellWarning)
        base = anova_to_tt(fit_anova1(samples))
    return pad_tt(base, rank, noise, np.random.SeedSequence([int(seed), 2]))


def standardization(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    std = float(values.std())
    return mean, (std if std > 0.0 else 1.0)


def standardize(samples: SampleSet, mean: float, std: float) -> SampleSet:
    return SampleSet(samples.latents, samples.indices, (samples.values - mean) / std,
                     samples.grid, samples.generator_tag)


def fit_report_mse(t: TTTensor, holdout: SampleSet, standardization=None) -> float:
    """Mean squared error of ``t`` on ``holdout``.

    With ``standardization=(mean, std)`` the tensor is taken to predict
    standardized values and the holdout values are standardized to match.
    """
    if holdout.m == 0:
        raise InputError("empty holdout set")
    target = holdout.values
    if standardization is not None:
        mean, std = standardization
        target = (target - mean) / std
    pred = tt_eval_batch(t, holdout.indices)
    return float(np.mean((pred - target) ** 2))
