"""Ordinary (optionally weighted) least squares with an intercept."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from decorrvi.linalg import solve_gram


@dataclass(frozen=True)
class LinearFit:
    intercept: float
    coef: np.ndarray
    jittered: bool

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.intercept + features @ self.coef


def fit_linear(features: np.ndarray, target: np.ndarray, weights: np.ndarray | None = None) -> LinearFit:
    n, p = features.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    sw = w.sum()
    # centring by the weighted means separates the intercept
    mx = w @ features / sw if p else np.zeros(0)
    my = float(w @ target / sw)
    xc = features - mx
    gram = xc.T @ (xc * w[:, None])
    rhs = xc.T @ (w * (target - my))
    coef, jittered = solve_gram(gram, rhs)
    return LinearFit(my - float(mx @ coef), coef, jittered)
