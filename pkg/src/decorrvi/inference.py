"""Cross-fitted estimation and the t-Cross interval.

Fold estimates are treated as roughly independent normal draws; the
interval uses a Student-t critical value with ``B - 1`` degrees of freedom
and a variance floor ``c^2 / n`` that keeps it from collapsing when the
fold estimates happen to agree.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import betaincinv

from decorrvi.data import Dataset, make_folds
from decorrvi.estimators import EstimatorConfig, FoldEstimate, Nuisances, estimate_fold
from decorrvi.nuisance import NuisanceSpec

DEFAULT_B = 5
DEFAULT_ALPHA = 0.05


def student_t_quantile(p: float, df: float) -> float:
    """Quantile of Student's t via the inverse regularized incomplete beta function."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if p == 0.5:
        return 0.0
    two_tail = 2.0 * min(p, 1.0 - p)
    x = float(betaincinv(df / 2.0, 0.5, two_tail))
    t = math.sqrt(df * (1.0 - x) / x)
    return t if p > 0.5 else -t


def t_critical(B: int, alpha: float) -> float:
    return student_t_quantile(1.0 - alpha / 2.0, B - 1)


def default_c(data: Dataset | np.ndarray) -> float:
    """Square of the (denominator-n) variance of Y."""
    y = data.y if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if y.shape[0] < 2:
        raise ValueError("default_c needs at least two observations")
    return float(np.mean((y - y.mean()) ** 2)) ** 2


def _finite_or_none(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return _finite_or_none(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def to_json(obj, **kwargs) -> str:
    """JSON with non-finite floats written as ``null``."""
    return json.dumps(_clean(obj), sort_keys=True, allow_nan=False, **kwargs)


@dataclass
class EstimateResult:
    parameter_id: str
    fold_estimates: list[float]
    psi_bar: float
    s2: float
    c: float
    se: float
    ci_low: float
    ci_high: float
    alpha: float
    B: int
    n: int
    infinite_flag: bool
    diagnostics: list[dict] = field(default_factory=list)

    @property
    def width(self) -> float:
        return self.ci_high - self.ci_low

    def covers(self, value: float) -> bool:
        return bool(self.ci_low <= value <= self.ci_high)

    def to_dict(self) -> dict:
        return _clean(asdict(self))


def t_cross(fold_estimates: Sequence[float], c: float, n: int, alpha: float = DEFAULT_ALPHA,
            parameter_id: str = "", singular: Sequence[bool] = ()) -> EstimateResult:
    """``psi_bar +- t_{B-1, alpha/2} * sqrt(s^2 / B + c^2 / n)``.

    A non-finite fold estimate or a singular-flagged fold gives the whole
    real line.
    """
    est = np.asarray(fold_estimates, dtype=np.float64)
    B = est.shape[0]
    if B < 2:
        raise ValueError("t-Cross needs at least two folds")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not c >= 0:
        raise ValueError("c must be nonnegative")
    if n < 1:
        raise ValueError("n must be positive")
    infinite = bool(np.any(~np.isfinite(est)) or any(singular))
    psi_bar = float(np.mean(est))
    if infinite:
        finite = est[np.isfinite(est)]
        psi_bar = float(np.mean(finite)) if finite.size else float("nan")
        return EstimateResult(parameter_id, est.tolist(), psi_bar, float("nan"), float(c),
                              float("inf"), float("-inf"), float("inf"), alpha, B, n, True)
    s2 = float(np.sum((est - psi_bar) ** 2) / (B - 1))
    se = math.sqrt(s2 / B + c * c / n)
    half = t_critical(B, alpha) * se
    return EstimateResult(parameter_id, est.tolist(), psi_bar, s2, float(c), se,
                          psi_bar - half, psi_bar + half, alpha, B, n, False)


def cross_fit(parameter_id: str, nuis: Nuisances, config: EstimatorConfig = EstimatorConfig()) -> list[FoldEstimate]:
    """Estimate on every fold of ``nuis.folds`` with out-of-fold nuisances."""
    return [estimate_fold(parameter_id, nuis, k, config) for k in range(nuis.folds.B)]


def combine(parameter_id: str, folds: list[FoldEstimate], c: float, n: int,
            alpha: float = DEFAULT_ALPHA) -> EstimateResult:
    res = t_cross([f.value for f in folds], c, n, alpha, parameter_id, [f.singular for f in folds])
    res.diagnostics = [_clean(f.diagnostics) for f in folds]
    return res


def estimate(data: Dataset, parameter_ids: str | Sequence[str], spec: NuisanceSpec, *, B: int = DEFAULT_B,
             alpha: float = DEFAULT_ALPHA, c: float | None = None, seed: int = 0,
             config: EstimatorConfig = EstimatorConfig(), nuisances: Nuisances | None = None):
    """Cross-fitted t-Cross results for one or several parameters.

    Nuisance fits are shared between parameters.  Returns a single
    :class:`EstimateResult` for a string id and a list otherwise.
    """
    single = isinstance(parameter_ids, str)
    ids = [parameter_ids] if single else list(parameter_ids)
    nuis = nuisances or Nuisances(data, make_folds(data.n, B, seed), spec, seed)
    c_val = default_c(data) if c is None else float(c)
    out = [combine(p, cross_fit(p, nuis, config), c_val, data.n, alpha) for p in ids]
    return out[0] if single else out
