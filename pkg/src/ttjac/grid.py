"""Equal-probability-mass grid for standard-normal latent coordinates."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import GridIndexError, InputError, ParameterError

_SQRT2 = math.sqrt(2.0)


def normal_cdf(x: float) -> float:
    # erfc form keeps relative accuracy in the lower tail
    return 0.5 * math.erfc(-x / _SQRT2)


def normal_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def normal_ppf(p: float) -> float:
    """Inverse standard-normal CDF by bracketed Newton iteration on erfc.

    Converges to machine precision; the bracket guarantees progress where
    the density is tiny.
    """
    if not 0.0 < p < 1.0:
        if p == 0.0:
            return -math.inf
        if p == 1.0:
            return math.inf
        raise ParameterError(f"probability must lie in [0, 1], got {p}")
    if p > 0.5:
        return -normal_ppf(1.0 - p)
    if p == 0.5:
        return 0.0
    lo, hi = -40.0, 0.0
    x = -math.sqrt(-2.0 * math.log(p))  # tail asymptote, good enough to start
    x = min(max(x, lo), hi)
    for _ in range(200):
        f = normal_cdf(x) - p
        if f > 0.0:
            hi = x
        else:
            lo = x
        dens = normal_pdf(x)
        step = f / dens if dens > 0.0 else math.inf
        x_new = x - step
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-15 * (1.0 + abs(x)):
            return x_new
        x = x_new
    return x


def _mass(a: float, b: float) -> float:
    # difference taken on the side with the smaller tail to avoid cancellation
    if b <= 0.0:
        return normal_cdf(b) - normal_cdf(a)
    if a >= 0.0:
        return normal_cdf(-a) - normal_cdf(-b)
    return 1.0 - normal_cdf(a) - normal_cdf(-b)


def interval_masses(boundaries) -> np.ndarray:
    """Standard-normal probability of each interval between consecutive boundaries."""
    t = [float(v) for v in boundaries]
    return np.array([_mass(t[i], t[i + 1]) for i in range(len(t) - 1)])


@dataclass(frozen=True)
class Grid1D:
    """Shared per-dimension grid: N cells, boundaries t[0..N], centers c[0..N-1]."""

    n_cells: int
    boundaries: np.ndarray
    centers: np.ndarray
    tail_mass: float

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=np.float64)
        c = np.asarray(self.centers, dtype=np.float64)
        b.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "centers", c)
        if b.shape != (self.n_cells + 1,) or c.shape != (self.n_cells,):
            raise ParameterError("grid arrays inconsistent with n_cells")

    @property
    def cell_mass(self) -> float:
        return (1.0 - 2.0 * self.tail_mass) / self.n_cells

    def __eq__(self, other):
        if not isinstance(other, Grid1D):
            return NotImplemented
        return (
            self.n_cells == other.n_cells
            and self.tail_mass == other.tail_mass
            and np.array_equal(self.boundaries, other.boundaries)
            and np.array_equal(self.centers, other.centers)
        )

    __hash__ = None


def _voronoi_centers(t: np.ndarray, midpoints: np.ndarray):
    """Centers whose nearest-center cells coincide with the intervals.

    Requires c[i] + c[i+1] = 2 t[i+1]; this leaves one free parameter x = c[0],
    every center is then +/-x plus a constant. x is the least-squares fit to
    the mass midpoints, clipped into the range keeping each c[i] strictly
    inside its interval. Returns None when that range is empty.
    """
    n = len(midpoints)
    sign = np.empty(n)
    offset = np.empty(n)
    sign[0], offset[0] = 1.0, 0.0
    for i in range(n - 1):
        sign[i + 1] = -sign[i]
        offset[i + 1] = 2.0 * t[i + 1] - offset[i]
    lo_b = (t[:-1] - offset) / sign
    hi_b = (t[1:] - offset) / sign
    lo = np.max(np.minimum(lo_b, hi_b))
    hi = np.min(np.maximum(lo_b, hi_b))
    if not lo < hi:
        return None
    x = float(np.mean(sign * (midpoints - offset)))
    margin = 1e-6 * (hi - lo)
    x = min(max(x, lo + margin), hi - margin)
    return sign * x + offset


def build_equal_mass_grid(
    n_cells: int, tail_mass: float = 1e-4, center_rule: str = "voronoi"
) -> Grid1D:
    """Partition the N(0, 1) axis into ``n_cells`` intervals of equal mass.

    ``tail_mass`` is clipped off each end so the outer boundaries are finite.
    With ``center_rule="voronoi"`` (default) centers are placed so that
    nearest-center quantization reproduces the equal-mass cells exactly;
    ``"midpoint"`` puts each center at its interval's mass midpoint.
    """
    if int(n_cells) != n_cells or n_cells < 2:
        raise ParameterError(f"n_cells must be an integer >= 2, got {n_cells}")
    if not 0.0 < tail_mass < 0.5:
        raise ParameterError(f"tail_mass must lie in (0, 0.5), got {tail_mass}")
    if center_rule not in ("voronoi", "midpoint"):
        raise ParameterError(f"unknown center_rule {center_rule!r}")
    n = int(n_cells)
    step = (1.0 - 2.0 * tail_mass) / n

    # lower half computed, upper half mirrored: exact symmetry about 0
    t = np.empty(n + 1)
    for i in range(n // 2 + 1):
        t[i] = normal_ppf(tail_mass + i * step)
        t[n - i] = -t[i]
    if n % 2 == 0:
        t[n // 2] = 0.0
    mid = np.empty(n)
    for i in range((n + 1) // 2):
        mid[i] = normal_ppf(tail_mass + (i + 0.5) * step)
        mid[n - 1 - i] = -mid[i]
    if n % 2 == 1:
        mid[n // 2] = 0.0

    centers = mid
    if center_rule == "voronoi":
        vor = _voronoi_centers(t, mid)
        if vor is None:
            warnings.warn(
                f"no nearest-center-consistent centers for n_cells={n}, "
                f"tail_mass={tail_mass}; using mass midpoints",
                stacklevel=2,
            )
        else:
            half = (n + 1) // 2
            centers = np.empty(n)
            centers[:half] = vor[:half]
            centers[n - half:] = -vor[:half][::-1]
            if n % 2 == 1:
                centers[n // 2] = 0.0
    return Grid1D(n_cells=n, boundaries=t, centers=centers, tail_mass=float(tail_mass))


def uniform_grid_mass_ratio(a: float, b: float, n_points: int) -> float:
    """Mass of the first uniform interval over the mass of interval N/2 - 1.

    Grid points are t_i = a + (b - a) i / (n_points - 1); interval i spans
    [t_i, t_{i+1}]. The normalizing integral cancels in the ratio.
    """
    if not a < b:
        raise ParameterError("need a < b")
    if n_points < 3:
        raise ParameterError("n_points must be >= 3")
    h = (b - a) / (n_points - 1)
    mid = n_points // 2 - 1
    first = _mass(a, a + h)
    middle = _mass(a + mid * h, a + (mid + 1) * h)
    return first / middle


def nearest_center(values, centers) -> np.ndarray:
    """Index of the nearest center for each value; ties go to the lower index.

    ``centers`` must be strictly increasing.
    """
    v = np.asarray(values, dtype=np.float64)
    c = np.asarray(centers, dtype=np.float64)
    # split points between consecutive centers; value == split -> lower cell
    splits = 0.5 * (c[:-1] + c[1:])
    idx = np.searchsorted(splits, v, side="left")
    # guard the split rounding: compare real distances to the neighbours
    below = np.clip(idx - 1, 0, len(c) - 1)
    above = np.clip(idx, 0, len(c) - 1)
    use_below = np.abs(v - c[below]) <= np.abs(v - c[above])
    return np.where(use_below & (idx > 0), below, above).astype(np.int64)


def quantize(z, grid: Grid1D) -> np.ndarray:
    """Grid index of the product-grid point closest to ``z``.

    Works on a single vector (d,) or a batch (M, d). The product grid shares
    one Grid1D per axis, so the Euclidean argmin splits per coordinate.
    """
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise InputError("latent vector contains non-finite values")
    return nearest_center(z, grid.centers)


def center_vector(idx, grid: Grid1D) -> np.ndarray:
    idx = np.asarray(idx)
    if idx.size and (idx.min() < 0 or idx.max() >= grid.n_cells):
        raise GridIndexError(
            f"grid index out of range [0, {grid.n_cells - 1}]: {idx.tolist()}"
        )
    return grid.centers[idx.astype(np.int64)]
