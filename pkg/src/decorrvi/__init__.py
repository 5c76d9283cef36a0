"""Decorrelated variable importance: estimators, intervals and simulations."""

from __future__ import annotations

from decorrvi.data import (
    Dataset,
    FoldAssignment,
    MomentSummary,
    expand_x,
    interaction_features,
    kronecker,
    load_csv,
    make_folds,
    orthogonal_basis,
    summarize,
)
from decorrvi.estimators import PARAMETERS, EstimatorConfig, FoldEstimate, Nuisances
from decorrvi.inference import EstimateResult, default_c, estimate, t_cross
from decorrvi.nuisance import NuisanceSpec, fit_regressor, predict

__version__ = "0.1.0"

__all__ = [
    "Dataset", "EstimateResult", "EstimatorConfig", "FoldAssignment", "FoldEstimate", "MomentSummary",
    "NuisanceSpec", "Nuisances", "PARAMETERS", "default_c", "estimate", "expand_x", "fit_regressor",
    "interaction_features", "kronecker", "load_csv", "make_folds", "orthogonal_basis", "predict",
    "summarize", "t_cross", "__version__",
]
