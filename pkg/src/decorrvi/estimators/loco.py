"""Plug-in LOCO and its screened variant."""

from __future__ import annotations

import warnings

import numpy as np

from decorrvi.estimators.common import EstimatorConfig, FoldEstimate, Nuisances


def _rmse(resid: np.ndarray) -> float:
    return float(np.sqrt(np.mean(resid ** 2)))


def _loco(nuis: Nuisances, k: int, z_cols, parameter_id: str) -> FoldEstimate:
    rows = nuis.eval_rows(k)
    x, z, y = nuis.data.x_block[rows], nuis.data.z_block[rows], nuis.data.y[rows]
    zv = z if z_cols is None else z[:, list(z_cols)]
    r_small = y - nuis.mu_z(k, zv, z_cols)
    r_full = y - nuis.mu_xz(k, x, zv, z_cols)
    value = float(np.mean(r_small ** 2) - np.mean(r_full ** 2))
    diag = {"rmse_mu_z": _rmse(r_small), "rmse_mu_xz": _rmse(r_full),
            "ridge_fallback": nuis.flagged()}
    return FoldEstimate(parameter_id, k, value, len(rows), diagnostics=diag)


def estimate_psi_L(nuis: Nuisances, k: int, config: EstimatorConfig = EstimatorConfig()) -> FoldEstimate:
    """Difference of in-fold mean squared errors of ``mu(z)`` and ``mu(x, z)``."""
    return _loco(nuis, k, None, "psi_L")


def screen_covariates(x_block: np.ndarray, z_block: np.ndarray, threshold: float = 0.5) -> tuple[int, ...]:
    """Indices ``j`` whose summed absolute Pearson correlation with the X
    columns is at most ``threshold``.

    A constant column contributes correlation 0 (with a warning).
    """
    x = np.asarray(x_block, dtype=np.float64)
    z = np.asarray(z_block, dtype=np.float64)
    if x.shape[0] < 3:
        raise ValueError("screening needs at least three rows")
    xc = x - x.mean(axis=0)
    zc = z - z.mean(axis=0)
    sx = np.sqrt(np.sum(xc ** 2, axis=0))
    sz = np.sqrt(np.sum(zc ** 2, axis=0))
    if np.any(sx == 0) or np.any(sz == 0):
        warnings.warn("zero-variance column in screening; its correlation is treated as 0",
                      RuntimeWarning, stacklevel=2)
    denom = np.outer(sx, sz)
    corr = np.divide(xc.T @ zc, denom, out=np.zeros_like(denom), where=denom > 0)
    score = np.abs(corr).sum(axis=0)
    return tuple(int(j) for j in np.flatnonzero(score <= threshold))


def estimate_psi_1(nuis: Nuisances, k: int, config: EstimatorConfig = EstimatorConfig()) -> FoldEstimate:
    """LOCO after dropping the Z columns strongly correlated with X.

    Screening uses the nuisance-training rows only.
    """
    train = nuis.train_rows(k)
    keep = screen_covariates(nuis.data.x_block[train], nuis.data.z_block[train], config.screen_threshold)
    est = _loco(nuis, k, keep, "psi_1")
    est.diagnostics["screened_in"] = list(keep)
    est.diagnostics["empty_screen"] = len(keep) == 0 and nuis.data.h > 0
    return est
