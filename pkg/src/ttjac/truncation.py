"""Truncation-trick harness: score-based vs latent-norm sample filtering."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, ParameterError
from .model import ScoreModel
from .samples import SampleSet

log = logging.getLogger(__name__)

KINDS = ("tt_score", "exact_score", "latent_norm")
_BLOCK = 512


@dataclass(frozen=True)
class FilterCriterion:
    """``tt_score`` and ``exact_score`` keep rows at or above the threshold;
    ``latent_norm`` keeps rows with ||z|| at or below it."""

    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown filter criterion {self.kind!r}")

    @property
    def keep_above(self) -> bool:
        return self.kind != "latent_norm"


TT_SCORE = FilterCriterion("tt_score")
EXACT_SCORE = FilterCriterion("exact_score")
LATENT_NORM = FilterCriterion("latent_norm")


@dataclass(frozen=True)
class PrCurvePoint:
    threshold: float
    kept_fraction: float
    precision: float
    recall: float


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)


def knn_radii(points: np.ndarray, k: int) -> np.ndarray:
    """Distance from each point to its k-th nearest other point."""
    n = points.shape[0]
    out = np.empty(n)
    for s in range(0, n, _BLOCK):
        d2 = _sq_dists(points[s:s + _BLOCK], points)
        # index 0 of each sorted row is the point itself
        out[s:s + _BLOCK] = np.sqrt(np.partition(d2, k, axis=1)[:, k])
    return out


def _coverage(queries: np.ndarray, centres: np.ndarray, radii: np.ndarray) -> float:
    """Fraction of queries inside at least one ball (centre, radius)."""
    hit = 0
    for s in range(0, queries.shape[0], _BLOCK):
        dist = np.sqrt(_sq_dists(queries[s:s + _BLOCK], centres))
        hit += int(np.count_nonzero(np.any(dist <= radii[None, :], axis=1)))
    return hit / queries.shape[0]


def knn_precision_recall(real_feats, gen_feats, k: int = 3) -> tuple[float, float]:
    """k-NN manifold precision and recall of generated features.

    Precision is the fraction of generated points within the k-NN ball of
    some real point; recall swaps the roles.
    """
    real = np.atleast_2d(np.asarray(real_feats, dtype=np.float64))
    gen = np.atleast_2d(np.asarray(gen_feats, dtype=np.float64))
    if k < 1 or k >= real.shape[0] or k >= gen.shape[0]:
        raise ParameterError(f"need 1 <= k < R and k < S, got k={k}, R={real.shape[0]}, S={gen.shape[0]}")
    if real.shape[1] != gen.shape[1]:
        raise ParameterError("feature dimensions differ")
    precision = _coverage(gen, real, knn_radii(real, k))
    recall = _coverage(real, gen, knn_radii(gen, k))
    return precision, recall


def criterion_statistic(samples: SampleSet, criterion: FilterCriterion,
                        model: ScoreModel | None = None) -> np.ndarray:
    if criterion.kind == "latent_norm":
        return np.linalg.norm(samples.latents, axis=1)
    if criterion.kind == "exact_score":
        return samples.values.copy()
    if model is None:
        raise ConfigError("tt_score filtering needs a ScoreModel")
    if samples.grid != model.grid:
        return model.evaluate(samples.latents)
    return model.lookup(samples.indices)


def filter_population(samples: SampleSet, criterion: FilterCriterion,
                      model: ScoreModel | None, threshold: float) -> np.ndarray:
    """Row indices kept by ``criterion`` at ``threshold``, in sample order."""
    stat = criterion_statistic(samples, criterion, model)
    keep = stat >= threshold if criterion.keep_above else stat <= threshold
    return np.flatnonzero(keep)


def fraction_threshold(stat: np.ndarray, criterion: FilterCriterion, fraction: float) -> float:
    """Threshold keeping the best ``round(fraction * n)`` rows (ties may add rows)."""
    n_keep = int(round(fraction * stat.shape[0]))
    if n_keep <= 0:
        return math.inf if criterion.keep_above else -math.inf
    ordered = np.sort(stat)
    if criterion.keep_above:
        return float(ordered[::-1][n_keep - 1])
    return float(ordered[n_keep - 1])


def sweep_tradeoff(samples: SampleSet, gen_feats, real_feats, criteria: Sequence[FilterCriterion],
                   thresholds=None, fractions=None, k: int = 3,
                   model: ScoreModel | None = None) -> dict[str, list[PrCurvePoint]]:
    """Precision/recall of the kept population along a threshold sweep.

    ``gen_feats`` are the embeddings of ``samples`` (row-aligned) and
    ``real_feats`` the reference embeddings. Pass either ``thresholds``, a
    dict criterion kind -> threshold values, or ``fractions``, target kept
    fractions: each point then keeps exactly the top round(f * M) rows by the
    criterion (ties broken by sample order), so curves of different criteria
    line up at identical kept fractions.
    """
    if (thresholds is None) == (fractions is None):
        raise ParameterError("pass exactly one of thresholds or fractions")
    gen_feats = np.atleast_2d(np.asarray(gen_feats, dtype=np.float64))
    real_feats = np.atleast_2d(np.asarray(real_feats, dtype=np.float64))
    if gen_feats.shape[0] != samples.m:
        raise ParameterError("gen_feats must be row-aligned with samples")
    curves = {}
    for crit in criteria:
        stat = criterion_statistic(samples, crit, model)
        # rank order, ties broken by sample order
        order = np.argsort(-stat if crit.keep_above else stat, kind="stable")
        if fractions is not None:
            sweep = [(fraction_threshold(stat, crit, f), int(round(f * samples.m))) for f in fractions]
        else:
            sweep = [(float(th), None) for th in thresholds[crit.kind]]
        points = []
        for th, n_keep in sweep:
            if n_keep is None:
                keep = np.flatnonzero(stat >= th if crit.keep_above else stat <= th)
            else:
                keep = np.sort(order[:n_keep])
            if keep.size <= k:
                log.warning("%s: threshold %.4g keeps %d samples, point skipped",
                            crit.kind, th, keep.size)
                continue
            p, r = knn_precision_recall(real_feats, gen_feats[keep], k)
            points.append(PrCurvePoint(float(th), keep.size / samples.m, p, r))
        curves[crit.kind] = points
    return curves


def write_curve_csv(path, curves: dict[str, list[PrCurvePoint]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["criterion", "threshold", "kept_fraction", "precision", "recall"])
        for kind, points in curves.items():
            for pt in points:
                w.writerow([kind, repr(pt.threshold), repr(pt.kept_fraction),
                            repr(pt.precision), repr(pt.recall)])


def kept_disagreement(stat_a: np.ndarray, stat_b: np.ndarray, fraction: float) -> float:
    """Fraction of the kept set that differs between two keep-above statistics
    filtered to the same kept fraction."""
    n_keep = int(round(fraction * stat_a.shape[0]))
    if n_keep == 0:
        return 0.0
    top_a = set(np.argsort(-stat_a, kind="stable")[:n_keep].tolist())
    top_b = set(np.argsort(-stat_b, kind="stable")[:n_keep].tolist())
    return len(top_a - top_b) / n_keep
