"""Fully nonparametric decorrelated importance and partial correlation.

Integrals over the product of marginals are discrete sums against a
``DecorrelationFits`` object: weighted support points for X and for Z, a
regression ``mu(x, z)`` and the ratio ``p(x)p(z)/p(x, z)``.  In the
estimators those supports are Monte Carlo draws from kernel density
estimates with equal weights; an exactly known discrete law can be
plugged in the same way.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from decorrvi.density import density_ratios, fit_kde, kde_sample
from decorrvi.errors import UnsupportedParameterError
from decorrvi.estimators.common import EstimatorConfig, FoldEstimate, Nuisances
from decorrvi.rng import named_int

_GRID_ROWS = 500_000
HEAVY_CLIP_FRACTION = 0.10


@dataclass(frozen=True)
class DecorrelationFits:
    mu: Callable[[np.ndarray, np.ndarray], np.ndarray]
    x_support: np.ndarray
    x_weights: np.ndarray
    z_support: np.ndarray
    z_weights: np.ndarray
    ratio: Callable[[np.ndarray, np.ndarray], np.ndarray]


def mu_grid(mu, xs: np.ndarray, zs: np.ndarray) -> np.ndarray:
    """``mu(xs[a], zs[b])`` as a ``len(xs) x len(zs)`` matrix."""
    nx, nz = xs.shape[0], zs.shape[0]
    out = np.empty((nx, nz))
    step = max(1, _GRID_ROWS // max(nz, 1))
    for s in range(0, nx, step):
        block = xs[s:s + step]
        xr = np.repeat(block, nz, axis=0)
        zr = np.tile(zs, (block.shape[0], 1))
        out[s:s + step] = np.asarray(mu(xr, zr), dtype=np.float64).reshape(block.shape[0], nz)
    return out


@dataclass(frozen=True)
class Psi0Pieces:
    """Row-wise ingredients of the decorrelated-LOCO estimators.

    ``loss`` is ``A + B + 2 r (mu - mu0)(Y - mu)`` per evaluation row; the
    remaining fields are kept for the partial-correlation estimator.
    """

    loss: np.ndarray
    plug_in: float
    ratio: np.ndarray
    resid: np.ndarray
    grid_xz: np.ndarray  # mu(x*_s, Z_i), shape (N_x, n)
    grid_star: np.ndarray  # mu(x*_s, z*_j), shape (N_x, N_z)
    grid_zx: np.ndarray  # mu(X_i, z*_j), shape (n, N_z)
    mu0_star: np.ndarray  # mu0(z*_j)


def psi0_pieces(fits: DecorrelationFits, x: np.ndarray, z: np.ndarray, y: np.ndarray) -> Psi0Pieces:
    wx, wz = fits.x_weights, fits.z_weights
    g1 = mu_grid(fits.mu, fits.x_support, z)
    g2 = mu_grid(fits.mu, fits.x_support, fits.z_support)
    g3 = mu_grid(fits.mu, x, fits.z_support)
    mu0_rows = wx @ g1
    mu0_star = wx @ g2
    a = wx @ (g1 - mu0_rows) ** 2
    b = (g3 - mu0_star) ** 2 @ wz
    plug_in = float(wx @ (g2 - mu0_star) ** 2 @ wz)
    mu_rows = np.asarray(fits.mu(x, z), dtype=np.float64).reshape(-1)
    ratio = np.asarray(fits.ratio(x, z), dtype=np.float64).reshape(-1)
    resid = y - mu_rows
    loss = a + b + 2 * ratio * (mu_rows - mu0_rows) * resid
    return Psi0Pieces(loss, plug_in, ratio, resid, g1, g2, g3, mu0_star)


def psi0_influence_values(fits: DecorrelationFits, x: np.ndarray, z: np.ndarray, y: np.ndarray,
                          psi_value: float) -> np.ndarray:
    """Row-wise influence ``L(U) - 2 psi``."""
    return psi0_pieces(fits, x, z, np.asarray(y, dtype=np.float64).reshape(-1)).loss - 2 * psi_value


def psi0_influence(u, fits: DecorrelationFits, psi_value: float) -> float:
    """Influence function at a single observation ``u = (x, z, y)``."""
    x_row, z_row, y = u
    x = np.atleast_1d(np.asarray(x_row, dtype=np.float64))[None, :]
    z = np.atleast_1d(np.asarray(z_row, dtype=np.float64)).reshape(1, -1)
    return float(psi0_influence_values(fits, x, z, np.array([float(y)]), psi_value)[0])


def kde_decorrelation_fits(nuis: Nuisances, k: int, config: EstimatorConfig) -> DecorrelationFits:
    """Kernel density fits, Monte Carlo supports and ``mu(x, z)`` from the training rows."""
    train = nuis.train_rows(k)
    xt, zt = nuis.data.x_block[train], nuis.data.z_block[train]
    kde_x, kde_z, kde_xz = fit_kde(xt), fit_kde(zt), fit_kde(np.hstack([xt, zt]))
    n_draws = config.mc_draws
    xs = kde_sample(kde_x, n_draws, named_int(nuis.seed, "mc-draws", k, "x"))
    zs = kde_sample(kde_z, n_draws, named_int(nuis.seed, "mc-draws", k, "z"))
    w = np.full(n_draws, 1.0 / n_draws)
    clip = config.clip_max
    return DecorrelationFits(
        mu=lambda xq, zq: nuis.mu_xz(k, xq, zq),
        x_support=xs, x_weights=w, z_support=zs, z_weights=w,
        ratio=lambda xq, zq: density_ratios(kde_x, kde_z, kde_xz, xq, zq, clip),
    )


def _clip_diagnostics(ratio: np.ndarray, clip_max: float) -> dict:
    clipped = int(np.sum(ratio >= clip_max)) if np.isfinite(clip_max) else 0
    frac = clipped / max(ratio.shape[0], 1)
    if frac > HEAVY_CLIP_FRACTION:
        warnings.warn(f"density ratio clipped on {frac:.0%} of rows", RuntimeWarning, stacklevel=3)
    return {"clipped_rows": clipped, "clipped_fraction": frac}


def estimate_psi_0(nuis: Nuisances, k: int, config: EstimatorConfig = EstimatorConfig()) -> FoldEstimate:
    """Decorrelated LOCO.

    By default the root of the estimating equation, ``mean(L) / 2``; with
    ``config.psi0_one_step`` the plug-in plus mean influence.
    """
    rows = nuis.eval_rows(k)
    x, z, y = nuis.data.x_block[rows], nuis.data.z_block[rows], nuis.data.y[rows]
    pieces = psi0_pieces(kde_decorrelation_fits(nuis, k, config), x, z, y)
    mean_loss = float(np.mean(pieces.loss))
    value = mean_loss - pieces.plug_in if config.psi0_one_step else mean_loss / 2
    diag = {"plug_in": pieces.plug_in, "one_step": bool(config.psi0_one_step),
            "ridge_fallback": nuis.flagged(), **_clip_diagnostics(pieces.ratio, config.clip_max)}
    return FoldEstimate("psi_0", k, value, len(rows), diagnostics=diag)


def rho0_components(fits: DecorrelationFits, x: np.ndarray, z: np.ndarray, y: np.ndarray,
                    noise_var: float) -> tuple[float, np.ndarray, dict]:
    """Plug-in partial correlation and its row-wise influence (scalar X).

    The numerator is ``E0[(mu - mu0)(X - m)]``, the denominator
    ``sqrt(Var X * E0[(Y - mu0(Z))^2])``; the conditional variance inside the
    latter uses the constant working value ``noise_var``, corrected to first
    order by the residual term of the influence function.
    """
    pieces = psi0_pieces(fits, x, z, y)
    xv = x[:, 0]
    xs = fits.x_support[:, 0]
    wx, wz = fits.x_weights, fits.z_weights
    m = float(xv.mean())
    var_x = float(np.mean((xv - m) ** 2))
    # g(x) = E_Z mu(x, Z); g_bar its mean under the X marginal
    g_rows = pieces.grid_zx @ wz
    g_bar = float(wx @ pieces.grid_star @ wz)
    num = float(wx @ ((pieces.grid_star - pieces.mu0_star) * (xs - m)[:, None]) @ wz)
    int_x = ((xs - m) * wx) @ pieces.grid_xz
    phi1 = ((g_rows - g_bar) * (xv - m) + int_x
            + (xv - m) * pieces.ratio * pieces.resid - 2 * num)
    phi2 = (xv - m) ** 2 - var_x
    psi0_pi = pieces.plug_in
    den = psi0_pi + noise_var
    phi3 = (pieces.loss - 2 * psi0_pi) + pieces.ratio * (pieces.resid ** 2 - noise_var)
    if not (var_x > 0 and den > 0):
        return float("nan"), np.full(xv.shape[0], np.nan), {"degenerate": True}
    scale = np.sqrt(var_x * den)
    rho = num / scale
    phi = (phi1 - num / (2 * var_x) * phi2 - num / (2 * den) * phi3) / scale
    return rho, phi, {"numerator": num, "var_x": var_x, "denominator_moment": den,
                      "ratio": pieces.ratio}


def estimate_rho_0(nuis: Nuisances, k: int, config: EstimatorConfig = EstimatorConfig()) -> FoldEstimate:
    """One-step decorrelated partial correlation; X must be scalar."""
    if nuis.data.g != 1:
        raise UnsupportedParameterError("rho_0 is defined for a single X column only")
    rows = nuis.eval_rows(k)
    train = nuis.train_rows(k)
    x, z, y = nuis.data.x_block[rows], nuis.data.z_block[rows], nuis.data.y[rows]
    fits = kde_decorrelation_fits(nuis, k, config)
    fit_resid = nuis.data.y[train] - nuis.mu_xz(k, nuis.data.x_block[train], nuis.data.z_block[train])
    noise_var = float(np.mean(fit_resid ** 2))
    rho, phi, info = rho0_components(fits, x, z, y, noise_var)
    if info.get("degenerate"):
        return FoldEstimate("rho_0", k, float("nan"), len(rows), True, {"degenerate": True})
    diag = {"plug_in": rho, "numerator": info["numerator"], "var_x": info["var_x"],
            **_clip_diagnostics(info["ratio"], config.clip_max)}
    return FoldEstimate("rho_0", k, rho + float(np.mean(phi)), len(rows), diagnostics=diag)
