"""Common fit/predict surface over the three regression families."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from decorrvi.errors import InsufficientDataError
from decorrvi.nuisance.additive import fit_additive
from decorrvi.nuisance.forest import fit_forest
from decorrvi.nuisance.linear import fit_linear
from decorrvi.nuisance.spec import NuisanceSpec


@dataclass(frozen=True)
class _ConstantFit:
    mean: np.ndarray

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.mean, (features.shape[0], self.mean.shape[0])).copy()


@dataclass(frozen=True)
class FittedRegressor:
    """A fitted multi-output regression ``R^p -> R^q``.

    Each output column is an independent fit; ``flagged`` records that
    some fit needed a ridge fallback for a rank-deficient design.
    """

    spec: NuisanceSpec
    input_dim: int
    output_dim: int
    models: tuple = field(repr=False)
    flagged: bool = False

    def predict(self, features: np.ndarray) -> np.ndarray:
        return predict(self, features)


def _as_2d(a: np.ndarray, n: int | None = None) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1) if n is None or a.shape[0] == n else a.reshape(n, -1)
    return a


def fit_regressor(spec: NuisanceSpec, features: np.ndarray, targets: np.ndarray, seed: int,
                  weights: np.ndarray | None = None) -> FittedRegressor:
    """Fit ``targets`` (n x q) on ``features`` (n x p) within ``spec.family``.

    ``weights`` switches to weighted least squares (linear, additive) or
    weighted bootstrap resampling (forest).
    """
    targets = _as_2d(targets)
    n = targets.shape[0]
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features.reshape(n, -1) if features.size else np.zeros((n, 0))
    if features.shape[0] != n:
        raise ValueError("features and targets have different row counts")
    p, q = features.shape[1], targets.shape[1]
    if n < 1:
        raise InsufficientDataError("cannot fit a regression on zero rows")
    w = None if weights is None else np.asarray(weights, dtype=np.float64)

    if p == 0:
        mean = (w @ targets / w.sum()) if w is not None else targets.mean(axis=0)
        return FittedRegressor(spec, 0, q, (_ConstantFit(mean),))

    if spec.family == "linear":
        if n < p + 1:
            raise InsufficientDataError(f"linear fit needs n >= p + 1 ({n} < {p + 1})")
        fits = tuple(fit_linear(features, targets[:, k], w) for k in range(q))
        return FittedRegressor(spec, p, q, fits, any(f.jittered for f in fits))
    if spec.family == "additive":
        if n < 4:
            raise InsufficientDataError("additive fit needs at least 4 rows")
        fit = fit_additive(features, targets, spec.knots_per_dim, spec.spline_degree,
                           spec.ridge_grid, seed, w)
        return FittedRegressor(spec, p, q, (fit,), fit.jittered)
    if n < 2 * spec.min_leaf:
        raise InsufficientDataError(f"forest needs n >= 2 * min_leaf ({n} < {2 * spec.min_leaf})")
    # every output column shares the seed, so a joint fit equals separate fits
    fits = tuple(
        fit_forest(features, targets[:, k], spec.n_trees, spec.min_leaf, spec.mtry_fraction,
                   spec.bootstrap, seed, w)
        for k in range(q)
    )
    return FittedRegressor(spec, p, q, fits)


def predict(model: FittedRegressor, features: np.ndarray) -> np.ndarray:
    """Row-wise predictions, shape ``(m, output_dim)``."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features.reshape(1, -1) if model.input_dim else features.reshape(-1, 0)
    if features.shape[1] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} features, got {features.shape[1]}")
    m = features.shape[0]
    if m == 0:
        return np.zeros((0, model.output_dim))
    if len(model.models) == 1 and (model.output_dim > 1 or model.spec.family == "additive"
                                    or isinstance(model.models[0], _ConstantFit)):
        return np.asarray(model.models[0].predict(features)).reshape(m, model.output_dim)
    cols = [np.asarray(f.predict(features)).reshape(m) for f in model.models]
    return np.column_stack(cols)
