"""Quadratic-form parameters under semiparametric working models.

Vectors of interaction coefficients follow the layout of
:func:`decorrvi.data.interaction_features`: ``theta = vec(Theta)`` with
``Theta = [beta | G]`` of shape ``g x (h + 1)`` and the X index fastest.
With that layout the moment matrix is ``E[Z~ Z~^T] (x) Sigma_X`` (the
Z~ factor on the left), which is what :func:`build_omega` returns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from decorrvi.data import MomentSummary, interaction_features
from decorrvi.estimators.common import EstimatorConfig, FoldEstimate, Nuisances
from decorrvi.linalg import condition_number, nearest_psd, solve_gram

V_FLOOR = 1e-6
V_MAX_CONDITION = 1e12


def sample_moments(x: np.ndarray, z: np.ndarray) -> MomentSummary:
    """Denominator-n moments of an arbitrary (X, Z) sample (Y unused)."""
    m_x, m_z = x.mean(axis=0), z.mean(axis=0)
    xc, zc = x - m_x, z - m_z
    sx = xc.T @ xc / x.shape[0]
    sz = zc.T @ zc / z.shape[0]
    sx, sz = (sx + sx.T) / 2, (sz + sz.T) / 2
    return MomentSummary(m_x, sx, m_z, sz, sz + np.outer(m_z, m_z), float("nan"))


# --------------------------------------------------------------------------- #
# Partially linear model
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class BetaFit:
    beta: np.ndarray
    gram: np.ndarray  # mean of (X - nu)(X - nu)^T
    resid_x: np.ndarray
    resid_y: np.ndarray
    singular: bool


def solve_beta(resid_x: np.ndarray, resid_y: np.ndarray) -> BetaFit:
    """Least squares of ``Y - mu(Z)`` on ``X - nu(Z)`` without intercept."""
    n = resid_x.shape[0]
    gram = resid_x.T @ resid_x / n
    beta, singular = solve_gram(gram, resid_x.T @ resid_y / n)
    return BetaFit(beta, gram, resid_x, resid_y, singular)


def fit_beta_partially_linear(nuis: Nuisances, k: int) -> BetaFit:
    """Residual-on-residual slope on the evaluation rows of fold ``k``."""
    rows = nuis.eval_rows(k)
    x, z, y = nuis.data.x_block[rows], nuis.data.z_block[rows], nuis.data.y[rows]
    return solve_beta(x - nuis.nu_z(k, z), y - nuis.mu_z(k, z))


def phi_beta(fit: BetaFit) -> np.ndarray:
    """Row-wise influence of beta, shape (n, g)."""
    e = fit.resid_y - fit.resid_x @ fit.beta
    score = fit.resid_x * e[:, None]
    sol, _ = solve_gram(fit.gram, score.T)
    return np.atleast_2d(sol.T).reshape(score.shape)


def psi2_influence(fit: BetaFit, x: np.ndarray, m_x: np.ndarray, sigma_x: np.ndarray,
                   psi_value: float) -> np.ndarray:
    """``2 beta' Sigma phi_beta + (beta'(X - m))^2 - psi`` per row."""
    lin = (x - m_x) @ fit.beta
    return 2 * phi_beta(fit) @ (sigma_x @ fit.beta) + lin ** 2 - psi_value


def estimate_psi_2(nuis: Nuisances, k: int, config: EstimatorConfig = EstimatorConfig()) -> FoldEstimate:
    """One-step estimate of ``beta' Sigma_X beta``."""
    rows = nuis.eval_rows(k)
    x = nuis.data.x_block[rows]
    fit = fit_beta_partially_linear(nuis, k)
    xc = x - x.mean(axis=0)
    sigma = xc.T @ xc / len(rows)
    plug_in = float(fit.beta @ sigma @ fit.beta)
    correction = float(np.mean(2 * phi_beta(fit) @ (sigma @ fit.beta)))
    diag = {"plug_in": plug_in, "beta": fit.beta.tolist(),
            "condition": condition_number(fit.gram), "ridge_fallback": nuis.flagged()}
    return FoldEstimate("psi_2", k, plug_in + correction, len(rows), fit.singular, diag)


# --------------------------------------------------------------------------- #
# Partially linear model with interactions
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class ThetaFit:
    """Interaction-model coefficients.

    ``theta`` reshaped column-major to ``g x (h + 1)`` is ``[beta | G]``.
    """

    theta: np.ndarray
    gram: np.ndarray
    g: int
    h: int
    singular: bool = False

    @property
    def matrix(self) -> np.ndarray:
        return self.theta.reshape(self.g, self.h + 1, order="F")

    @property
    def beta_block(self) -> np.ndarray:
        return self.theta[: self.g]

    @property
    def gamma_block(self) -> np.ndarray:
        return self.matrix[:, 1:]


def solve_theta(resid_x: np.ndarray, z: np.ndarray, resid_y: np.ndarray) -> tuple[ThetaFit, np.ndarray]:
    """Least squares of ``R_Y`` on ``R_XZ = vec((X - nu) Z~^T)``; returns the fit and R_XZ."""
    r = interaction_features(resid_x, z)
    n = r.shape[0]
    gram = r.T @ r / n
    theta, singular = solve_gram(gram, r.T @ resid_y / n)
    return ThetaFit(theta, gram, resid_x.shape[1], z.shape[1], singular), r


def fit_theta_interactions(nuis: Nuisances, k: int) -> ThetaFit:
    rows = nuis.eval_rows(k)
    x, z, y = nuis.data.x_block[rows], nuis.data.z_block[rows], nuis.data.y[rows]
    return solve_theta(x - nuis.nu_z(k, z), z, y - nuis.mu_z(k, z))[0]


def phi_theta(fit: ThetaFit, r_xz: np.ndarray, resid_y: np.ndarray) -> np.ndarray:
    """Row-wise influence of theta, shape (n, g(h+1))."""
    e = resid_y - r_xz @ fit.theta
    sol, _ = solve_gram(fit.gram, (r_xz * e[:, None]).T)
    return np.atleast_2d(sol.T).reshape(r_xz.shape)


def _z_moment(moments: MomentSummary) -> np.ndarray:
    h = moments.m_z.shape[0]
    m = np.empty((h + 1, h + 1))
    m[0, 0] = 1.0
    m[0, 1:] = moments.m_z
    m[1:, 0] = moments.m_z
    m[1:, 1:] = moments.gamma
    return m


@dataclass(frozen=True)
class OmegaMatrix:
    omega: np.ndarray


def build_omega(moments: MomentSummary) -> OmegaMatrix:
    """``E[Z~ Z~^T] (x) Sigma_X`` in the X-fastest layout."""
    omega = np.kron(_z_moment(moments), moments.sigma_x)
    return OmegaMatrix((omega + omega.T) / 2)


def omega_influence(x_row, z_row, moments: MomentSummary) -> np.ndarray:
    """Influence of Omega at one observation, in the layout of :func:`build_omega`."""
    x = np.atleast_1d(np.asarray(x_row, dtype=np.float64))
    z = np.atleast_1d(np.asarray(z_row, dtype=np.float64)).reshape(-1)
    zt = np.concatenate([[1.0], z])
    zmom = _z_moment(moments)
    xc = x - moments.m_x
    return (np.kron(np.outer(zt, zt) - zmom, moments.sigma_x)
            + np.kron(zmom, np.outer(xc, xc) - moments.sigma_x))


def omega_quadratic_influence(theta_fit: ThetaFit, x: np.ndarray, z: np.ndarray,
                              moments: MomentSummary) -> np.ndarray:
    """``theta' Omega_dot(U_i) theta`` for every row, without forming the matrices."""
    big_theta = theta_fit.matrix
    zmom = _z_moment(moments)
    p = big_theta.T @ moments.sigma_x @ big_theta
    q = big_theta @ zmom @ big_theta.T
    zt = np.hstack([np.ones((z.shape[0], 1)), z])
    xc = x - moments.m_x
    return (np.einsum("ij,jk,ik->i", zt, p, zt) - np.sum(p * zmom)
            + np.einsum("ij,jk,ik->i", xc, q, xc) - np.sum(moments.sigma_x * q))


def psi3_components(theta_fit: ThetaFit, r_xz: np.ndarray, resid_y: np.ndarray, x: np.ndarray,
                    z: np.ndarray, moments: MomentSummary) -> tuple[float, np.ndarray]:
    """Plug-in value and row-wise influence ``2 theta' Omega phi_theta + theta' Omega_dot theta``.

    ``Omega_dot`` is already centred, so no ``- psi`` term appears.
    """
    omega = build_omega(moments).omega
    w = omega @ theta_fit.theta
    plug_in = float(theta_fit.theta @ w)
    phi = 2 * phi_theta(theta_fit, r_xz, resid_y) @ w + omega_quadratic_influence(theta_fit, x, z, moments)
    return plug_in, phi


def estimate_psi_3(nuis: Nuisances, k: int, config: EstimatorConfig = EstimatorConfig()) -> FoldEstimate:
    """One-step estimate of ``theta' Omega theta``."""
    rows = nuis.eval_rows(k)
    x, z, y = nuis.data.x_block[rows], nuis.data.z_block[rows], nuis.data.y[rows]
    fit, r_xz = solve_theta(x - nuis.nu_z(k, z), z, y - nuis.mu_z(k, z))
    moments = sample_moments(x, z)
    plug_in, phi = psi3_components(fit, r_xz, y - nuis.mu_z(k, z), x, z, moments)
    diag = {"plug_in": plug_in, "condition": condition_number(fit.gram),
            "ridge_fallback": nuis.flagged()}
    return FoldEstimate("psi_3", k, plug_in + float(np.mean(phi)), len(rows), fit.singular, diag)


# --------------------------------------------------------------------------- #
# Closed forms
# --------------------------------------------------------------------------- #

def closed_form_auxiliaries(theta_fit: ThetaFit, moments: MomentSummary) -> dict[str, float]:
    """Derivative importance and g-formula quantities under both working models.

    With ``mu(x, z) = x'(beta + G z) + f(z)`` the gradient in ``x`` is
    ``beta + G z``; the interaction-model derivative importance is its
    expected squared norm and the g-formula mean ``E_Z mu(x, Z)`` has
    slope ``beta + G m_Z``.
    """
    beta = theta_fit.beta_block
    gmat = theta_fit.gamma_block
    sx = moments.sigma_x
    slope = beta + gmat @ moments.m_z
    return {
        "derivative_partially_linear": float(beta @ beta),
        "gformula_variance_partially_linear": float(beta @ sx @ beta),
        "derivative_interaction": float(slope @ slope + np.trace(gmat @ moments.sigma_z @ gmat.T)),
        "gformula_variance_interaction": float(slope @ sx @ slope),
        "gformula_derivative_interaction": float(slope @ slope),
    }


def psi_L_semiparametric_closed_form(theta_fit: ThetaFit, moments: MomentSummary,
                                     x_block: np.ndarray, nu_values: np.ndarray) -> float:
    """LOCO under the interaction model from theta and four moment blocks.

    ``X - nu(Z)`` splits into ``(X - m_X) + (m_X - nu(Z))``; each of the
    four cross products is averaged and paired with ``E[Z~ Z~^T]``.
    """
    n = x_block.shape[0]
    a = x_block - moments.m_x
    b = moments.m_x - nu_values.reshape(n, -1)
    zmom = _z_moment(moments)
    blocks = [a.T @ a / n, a.T @ b / n, b.T @ a / n, b.T @ b / n]
    total = sum(np.kron(zmom, blk) for blk in blocks)
    return float(theta_fit.theta @ total @ theta_fit.theta)


def _auxiliary(nuis: Nuisances, k: int, key: str, parameter_id: str) -> FoldEstimate:
    rows = nuis.eval_rows(k)
    x, z = nuis.data.x_block[rows], nuis.data.z_block[rows]
    fit = fit_theta_interactions(nuis, k)
    value = closed_form_auxiliaries(fit, sample_moments(x, z))[key]
    return FoldEstimate(parameter_id, k, value, len(rows), fit.singular,
                        {"condition": condition_number(fit.gram)})


def estimate_aux_derivative(nuis: Nuisances, k: int, config: EstimatorConfig = EstimatorConfig()) -> FoldEstimate:
    """Plug-in interaction-model derivative importance."""
    return _auxiliary(nuis, k, "derivative_interaction", "aux_derivative")


def estimate_aux_gformula(nuis: Nuisances, k: int, config: EstimatorConfig = EstimatorConfig()) -> FoldEstimate:
    """Plug-in interaction-model g-formula variance."""
    return _auxiliary(nuis, k, "gformula_variance_interaction", "aux_gformula")


# --------------------------------------------------------------------------- #
# Varying-coefficient model
# --------------------------------------------------------------------------- #

def psi4_components(x, y, nu, mu, v, c, sigma_x):
    """Plug-in ``tr(Sigma_X H)`` and its row-wise first-order correction.

    ``v`` and ``c`` are fitted ``Cov(X | Z)`` and ``Cov(X, Y | Z)`` at the
    rows.  Returns ``(plug_in, correction, kept_mask)``; rows whose floored
    conditional covariance is still ill-conditioned are dropped.
    """
    v = nearest_psd(v, V_FLOOR)
    vals = np.linalg.eigvalsh(v)
    keep = vals.max(axis=1) <= V_MAX_CONDITION * vals.min(axis=1)
    v, c = v[keep], c[keep]
    rx = (x - nu)[keep]
    ry = (y - mu)[keep]
    beta = np.linalg.solve(v, c[:, :, None])[:, :, 0]
    e = ry - np.sum(rx * beta, axis=1)
    s = np.linalg.solve(v, (rx * e[:, None])[:, :, None])[:, :, 0]
    sb = beta @ sigma_x
    plug_in = float(np.mean(np.sum(sb * beta, axis=1)))
    correction = 2 * np.sum(sb * s, axis=1)
    return plug_in, correction, keep


def estimate_psi_4(nuis: Nuisances, k: int, config: EstimatorConfig = EstimatorConfig()) -> FoldEstimate:
    """One-step estimate of ``tr(Sigma_X E[beta(Z) beta(Z)^T])``."""
    rows = nuis.eval_rows(k)
    x, z, y = nuis.data.x_block[rows], nuis.data.z_block[rows], nuis.data.y[rows]
    v, c = nuis.conditional_covariances(k, z)
    xc = x - x.mean(axis=0)
    sigma = xc.T @ xc / len(rows)
    plug_in, corr, keep = psi4_components(x, y, nuis.nu_z(k, z), nuis.mu_z(k, z), v, c, sigma)
    skipped = int(np.sum(~keep))
    if not keep.any():
        return FoldEstimate("psi_4", k, float("nan"), len(rows), True, {"skipped_rows": skipped})
    value = plug_in + float(np.mean(corr))
    return FoldEstimate("psi_4", k, value, len(rows), False,
                        {"plug_in": plug_in, "skipped_rows": skipped, "ridge_fallback": nuis.flagged()})
