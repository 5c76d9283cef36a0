"""Nuisance regressions mu(z), nu(z), mu(x, z) under three families."""

from decorrvi.nuisance.fit import FittedRegressor, fit_regressor, predict
from decorrvi.nuisance.spec import FAMILIES, NuisanceSpec

__all__ = ["FAMILIES", "FittedRegressor", "NuisanceSpec", "fit_regressor", "predict"]
