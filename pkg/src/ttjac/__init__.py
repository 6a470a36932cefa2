"""Data-free log-density scoring of generator samples, compressed in tensor-train format."""

from .errors import (
    ConfigError, DegenerateJacobianError, FormatError, GridIndexError, InputError,
    NumericalError, ParameterError, ShapeError, SizeError, TTJacError, UnderdeterminedError,
)
from .fit import (
    AlsConfig, AnovaModel, FitReport, als_init, anova_to_tt, fit_als, fit_anova1,
    fit_report_mse,
)
from .grid import Grid1D, build_equal_mass_grid, center_vector, quantize, uniform_grid_mass_ratio
from .jacobian import (
    FeatureMapSpec, GeneratorSpec, ScoreResult, build_sample_set, jacobian, log_prior,
    log_volume, score, score_batch,
)
from .model import ScoreModel
from .probe import (
    PairwiseMatrix, Spectrum, pairwise_matrix_from_samples, pairwise_matrix_from_tt,
    spectrum, suggest_rank,
)
from .samples import SampleSet, read_samples, write_samples
from .truncation import (
    FilterCriterion, PrCurvePoint, filter_population, knn_precision_recall, sweep_tradeoff,
)
from .tt import EvalStats, TTTensor, tt_eval, tt_eval_batch, tt_materialize, tt_random

__version__ = "0.1.0"

__all__ = [
    "AlsConfig",
    "AnovaModel",
    "ConfigError",
    "DegenerateJacobianError",
    "EvalStats",
    "FeatureMapSpec",
    "FilterCriterion",
    "FitReport",
    "FormatError",
    "GeneratorSpec",
    "Grid1D",
    "GridIndexError",
    "InputError",
    "NumericalError",
    "PairwiseMatrix",
    "ParameterError",
    "PrCurvePoint",
    "SampleSet",
    "ScoreModel",
    "ScoreResult",
    "ShapeError",
    "SizeError",
    "Spectrum",
    "TTJacError",
    "TTTensor",
    "UnderdeterminedError",
    "als_init",
    "anova_to_tt",
    "build_equal_mass_grid",
    "build_sample_set",
    "center_vector",
    "filter_population",
    "fit_als",
    "fit_anova1",
    "fit_report_mse",
    "jacobian",
    "knn_precision_recall",
    "log_prior",
    "log_volume",
    "pairwise_matrix_from_samples",
    "pairwise_matrix_from_tt",
    "quantize",
    "read_samples",
    "score",
    "score_batch",
    "spectrum",
    "suggest_rank",
    "sweep_tradeoff",
    "tt_eval",
    "tt_eval_batch",
    "tt_materialize",
    "tt_random",
    "uniform_grid_mass_ratio",
    "write_samples",
]
