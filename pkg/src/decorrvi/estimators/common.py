"""Shared pieces for the fold-wise estimators: results, configuration and
lazily fitted, cached nuisance regressions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from decorrvi.data import Dataset, FoldAssignment
from decorrvi.density import DEFAULT_CLIP_MAX, DEFAULT_MC_DRAWS
from decorrvi.nuisance import FittedRegressor, NuisanceSpec, fit_regressor
from decorrvi.rng import named_int, named_rng


@dataclass
class FoldEstimate:
    """Estimate of one parameter on one evaluation fold.

    ``singular`` marks a fold whose linear system stayed rank deficient;
    the interval built from such folds is infinite.
    """

    parameter_id: str
    fold_index: int
    value: float
    n_fold: int
    singular: bool = False
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EstimatorConfig:
    screen_threshold: float = 0.5
    clip_max: float = DEFAULT_CLIP_MAX
    mc_draws: int = DEFAULT_MC_DRAWS
    psi0_one_step: bool = False
    balance_x_degree: int = 2
    balance_z_degree: int = 2
    balance_max_terms: int = 25


@dataclass(frozen=True)
class _Pair:
    models: tuple
    flagged: bool


def upper_pairs(g: int) -> list[tuple[int, int]]:
    return [(a, b) for a in range(g) for b in range(a, g)]


class Nuisances:
    """Out-of-fold nuisance regressions for one dataset and fold split.

    Fits are made on the training rows of fold ``k`` on first use and
    cached; the seed of each fit depends only on the fold, the target and
    the feature set, so identical requests give identical fits.

    ``overrides`` replaces a nuisance by a known function (``"mu_z"``:
    ``f(z)``, ``"nu_z"``: ``f(z) -> (m, g)``, ``"mu_xz"``: ``f(x, z)``);
    these apply to the full Z block only.  Kinds listed in ``shuffled``
    are fitted to randomly permuted targets, a deliberate
    misspecification used in robustness checks.
    """

    def __init__(self, data: Dataset, folds: FoldAssignment, spec: NuisanceSpec, seed: int = 0,
                 overrides: Mapping[str, Callable] | None = None, shuffled=(),
                 weights: np.ndarray | None = None):
        self.data = data
        self.folds = folds
        self.spec = spec
        self.seed = seed
        self.overrides = dict(overrides or {})
        self.shuffled = frozenset(shuffled)
        self.weights = weights
        self._fits: dict = {}
        self._rows: dict = {}

    def train_rows(self, k: int) -> np.ndarray:
        return self._split(k)[0]

    def eval_rows(self, k: int) -> np.ndarray:
        return self._split(k)[1]

    def _split(self, k: int):
        if k not in self._rows:
            self._rows[k] = (self.folds.train_rows(k), self.folds.eval_rows(k))
        return self._rows[k]

    def _features(self, rows, with_x: bool, z_cols) -> np.ndarray:
        z = self.data.z_block[rows] if z_cols is None else self.data.z_block[rows][:, list(z_cols)]
        return np.hstack([self.data.x_block[rows], z]) if with_x else z

    def _targets(self, rows, target: str) -> np.ndarray:
        x, y = self.data.x_block[rows], self.data.y[rows]
        if target == "y":
            return y[:, None]
        if target == "x":
            return x
        raise KeyError(target)

    def regressor(self, k: int, kind: str, target: str, with_x: bool, z_cols=None) -> FittedRegressor:
        cols = None if z_cols is None or tuple(z_cols) == tuple(range(self.data.h)) else tuple(z_cols)
        key = (k, target, with_x, cols, kind in self.shuffled)
        if key not in self._fits:
            rows = self.train_rows(k)
            feats = self._features(rows, with_x, cols)
            targ = self._targets(rows, target)
            if kind in self.shuffled:
                targ = targ[named_rng(self.seed, "shuffle", kind, k).permutation(len(rows))]
            w = None if self.weights is None else self.weights[rows]
            seed = named_int(self.seed, "nuisance", k, target, with_x, cols)
            self._fits[key] = fit_regressor(self.spec, feats, targ, seed, w)
        return self._fits[key]

    def _full_z(self, z_cols) -> bool:
        return z_cols is None or tuple(z_cols) == tuple(range(self.data.h))

    def mu_z(self, k: int, z: np.ndarray, z_cols=None) -> np.ndarray:
        if "mu_z" in self.overrides and self._full_z(z_cols):
            return np.asarray(self.overrides["mu_z"](z), dtype=np.float64).reshape(-1)
        return self.regressor(k, "mu_z", "y", False, z_cols).predict(z)[:, 0]

    def mu_xz(self, k: int, x: np.ndarray, z: np.ndarray, z_cols=None) -> np.ndarray:
        if "mu_xz" in self.overrides and self._full_z(z_cols):
            return np.asarray(self.overrides["mu_xz"](x, z), dtype=np.float64).reshape(-1)
        return self.regressor(k, "mu_xz", "y", True, z_cols).predict(np.hstack([x, z]))[:, 0]

    def nu_z(self, k: int, z: np.ndarray) -> np.ndarray:
        if "nu_z" in self.overrides:
            return np.asarray(self.overrides["nu_z"](z), dtype=np.float64).reshape(z.shape[0], -1)
        return self.regressor(k, "nu_z", "x", False).predict(z)

    def conditional_covariances(self, k: int, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Fitted ``Cov(X | Z)`` (m, g, g) and ``Cov(X, Y | Z)`` (m, g).

        The training rows are split in two; ``nu`` and ``mu`` fitted on one
        half give residuals on the other, and the residual products are
        then regressed on Z over all training rows.  Regressing products of
        honest residuals avoids the cancellation in ``E[XX'|Z] - nu nu'``.
        """
        key = (k, "cond-cov")
        if key not in self._fits:
            self._fits[key] = self._fit_conditional_covariances(k)
        fit_v, fit_c = self._fits[key].models
        g = self.data.g
        flat = fit_v.predict(z)
        v = np.empty((z.shape[0], g, g))
        for c, (a, b) in enumerate(upper_pairs(g)):
            v[:, a, b] = flat[:, c]
            v[:, b, a] = flat[:, c]
        return v, fit_c.predict(z)

    def _fit_conditional_covariances(self, k: int):
        rows = self.train_rows(k)
        x, z, y = self.data.x_block[rows], self.data.z_block[rows], self.data.y[rows]
        perm = named_rng(self.seed, "cond-cov", k).permutation(len(rows))
        halves = (perm[: len(rows) // 2], perm[len(rows) // 2:])
        rx = np.empty_like(x)
        ry = np.empty_like(y)
        for a, b in (halves, halves[::-1]):
            seed = named_int(self.seed, "cond-cov", k, len(a))
            rx[b] = x[b] - fit_regressor(self.spec, z[a], x[a], seed).predict(z[b])
            ry[b] = y[b] - fit_regressor(self.spec, z[a], y[a], seed).predict(z[b])[:, 0]
        prods = np.column_stack([rx[:, a] * rx[:, b] for a, b in upper_pairs(x.shape[1])])
        seed = named_int(self.seed, "cond-cov", k)
        fit_v = fit_regressor(self.spec, z, prods, seed)
        fit_c = fit_regressor(self.spec, z, rx * ry[:, None], seed)
        return _Pair((fit_v, fit_c), fit_v.flagged or fit_c.flagged)

    def flagged(self) -> bool:
        return any(f.flagged for f in self._fits.values())
