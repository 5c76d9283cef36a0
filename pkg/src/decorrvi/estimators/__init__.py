"""Fold-wise estimators for every importance parameter."""

from __future__ import annotations

from decorrvi.errors import UnsupportedParameterError
from decorrvi.estimators.common import EstimatorConfig, FoldEstimate, Nuisances
from decorrvi.estimators.loco import estimate_psi_1, estimate_psi_L, screen_covariates
from decorrvi.estimators.nonparametric import (
    DecorrelationFits,
    estimate_psi_0,
    estimate_rho_0,
    psi0_influence,
    psi0_influence_values,
)
from decorrvi.estimators.semiparametric import (
    OmegaMatrix,
    ThetaFit,
    build_omega,
    closed_form_auxiliaries,
    estimate_aux_derivative,
    estimate_aux_gformula,
    estimate_psi_2,
    estimate_psi_3,
    estimate_psi_4,
    fit_beta_partially_linear,
    fit_theta_interactions,
    omega_influence,
    psi_L_semiparametric_closed_form,
)


def _weighted_psi_L(nuis: Nuisances, k: int, config: EstimatorConfig = EstimatorConfig()) -> FoldEstimate:
    from decorrvi.balance import weighted_psi_L

    return weighted_psi_L(nuis, k, config)


ESTIMATORS = {
    "psi_L": estimate_psi_L,
    "psi_0": estimate_psi_0,
    "psi_1": estimate_psi_1,
    "psi_2": estimate_psi_2,
    "psi_3": estimate_psi_3,
    "psi_4": estimate_psi_4,
    "rho_0": estimate_rho_0,
    "aux_derivative": estimate_aux_derivative,
    "aux_gformula": estimate_aux_gformula,
    "psi_L_weighted": _weighted_psi_L,
}

PARAMETERS = tuple(ESTIMATORS)


def estimate_fold(parameter_id: str, nuis: Nuisances, k: int,
                  config: EstimatorConfig = EstimatorConfig()) -> FoldEstimate:
    """Dispatch on a parameter identifier."""
    try:
        fn = ESTIMATORS[parameter_id]
    except KeyError:
        raise UnsupportedParameterError(
            f"unknown parameter {parameter_id!r}; choose from {', '.join(PARAMETERS)}") from None
    return fn(nuis, k, config)


__all__ = [
    "ESTIMATORS", "PARAMETERS", "DecorrelationFits", "EstimatorConfig", "FoldEstimate", "Nuisances",
    "OmegaMatrix", "ThetaFit", "build_omega", "closed_form_auxiliaries", "estimate_fold",
    "estimate_psi_0", "estimate_psi_1", "estimate_psi_2", "estimate_psi_3", "estimate_psi_4",
    "estimate_psi_L", "estimate_rho_0", "estimate_aux_derivative", "estimate_aux_gformula",
    "fit_beta_partially_linear", "fit_theta_interactions", "omega_influence", "psi0_influence",
    "psi0_influence_values", "psi_L_semiparametric_closed_form", "screen_covariates",
]
