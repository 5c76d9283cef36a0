"""Covariate-balancing weights by quadratic projection, and weighted LOCO.

Given functions ``h_j(x, z) = f_j(x) g_j(z)`` with ``h_1 = 1``, the
weights ``W`` closest to 1 in squared distance subject to

    mean(W * h_j) = mean(f_j) * mean(g_j)   for every j

are ``W = 1 - H lambda`` with ``lambda = (H'H/n)^-1 (h_bar - mu_hat)``.
Weights may be negative.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from decorrvi.data import OrthogonalPolynomial
from decorrvi.errors import DataError, NumericalError
from decorrvi.estimators.common import EstimatorConfig, FoldEstimate, Nuisances
from decorrvi.linalg import condition_number, solve_gram

CONSTRAINT_TOL = 1e-8
MEAN_TOL = 1e-10

Feature = Callable[[np.ndarray], np.ndarray]


def _one(block: np.ndarray) -> np.ndarray:
    return np.ones(block.shape[0])


@dataclass(frozen=True)
class MomentBasis:
    """Product functions ``f_j(x) g_j(z)``; the first pair must be the constant."""

    pairs: tuple[tuple[Feature, Feature], ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.pairs:
            raise ValueError("a moment basis needs at least the constant function")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"h{j + 1}" for j in range(len(self.pairs))))

    @property
    def k(self) -> int:
        return len(self.pairs)

    def parts(self, x: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        f = np.column_stack([np.asarray(fx(x), dtype=np.float64).reshape(-1) for fx, _ in self.pairs])
        g = np.column_stack([np.asarray(gz(z), dtype=np.float64).reshape(-1) for _, gz in self.pairs])
        return f, g

    def matrix(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        f, g = self.parts(x, z)
        return f * g


def product_basis(terms: Sequence[tuple[Feature, Feature]], labels: Sequence[str] = ()) -> MomentBasis:
    """Prepend the constant pair to user-supplied ``(f, g)`` pairs."""
    return MomentBasis(((_one, _one), *terms), ("1", *labels) if labels else ())


def _column_poly(poly: OrthogonalPolynomial, col: int, power: int) -> Feature:
    return lambda block: poly.transform(block[:, col])[:, power - 1]


def default_basis(x: np.ndarray, z: np.ndarray, x_degree: int = 2, z_degree: int = 2,
                  max_terms: int = 25) -> MomentBasis:
    """Constant plus products ``b_p(x_a) b_q(z_j)`` of orthogonal polynomials.

    Degrees run from 0 (the constant) so the marginal moments of each X and
    each Z column are pinned as well as the cross moments; without them the
    weights may shrink the spread of X.  Polynomials are fitted on
    ``(x, z)``, terms are ordered by total degree and the list is
    truncated at ``max_terms`` functions in all.
    """
    xp = [OrthogonalPolynomial.fit(x[:, a], x_degree) for a in range(x.shape[1])]
    zp = [OrthogonalPolynomial.fit(z[:, j], z_degree) for j in range(z.shape[1])]
    cands = []
    for p in range(1, x_degree + 1):
        cands += [(p, 0, a, p, -1, 0) for a in range(x.shape[1])]
    for q in range(1, z_degree + 1):
        cands += [(q, 1, -1, 0, j, q) for j in range(z.shape[1])]
    for p in range(1, x_degree + 1):
        for q in range(1, z_degree + 1):
            cands += [(p + q, 2, a, p, j, q) for a in range(x.shape[1]) for j in range(z.shape[1])]
    cands.sort()
    terms, labels = [], []
    for _, _, a, p, j, q in cands[: max(0, max_terms - 1)]:
        f = _column_poly(xp[a], a, p) if p else _one
        g = _column_poly(zp[j], j, q) if q else _one
        terms.append((f, g))
        labels.append("*".join(([f"b{p}(x{a + 1})"] if p else []) + ([f"b{q}(z{j + 1})"] if q else [])))
    return product_basis(terms, labels)


@dataclass(frozen=True)
class BalanceWeights:
    weights: np.ndarray
    lam: np.ndarray
    constraint_residuals: np.ndarray
    basis: MomentBasis | None = None
    singular: bool = False
    condition: float = 1.0

    def __post_init__(self) -> None:
        if abs(float(np.mean(self.weights)) - 1.0) > MEAN_TOL:
            raise ValueError(f"balancing weights must average 1 (got {np.mean(self.weights)!r})")

    def weights_for(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Apply ``1 - h(x, z)' lambda`` to new rows with lambda held fixed."""
        if self.basis is None:
            raise ValueError("no basis attached to these weights")
        return 1.0 - self.basis.matrix(x, z) @ self.lam

    @property
    def negative_fraction(self) -> float:
        return float(np.mean(self.weights < 0))


def solve_balance_weights(x: np.ndarray, z: np.ndarray, basis: MomentBasis) -> BalanceWeights:
    """Minimum-distance weights meeting the product-of-marginals moment constraints."""
    f, g = basis.parts(x, z)
    if not np.allclose(f[:, 0] * g[:, 0], 1.0):
        raise DataError("the first basis function must be the constant 1")
    hmat = f * g
    n = hmat.shape[0]
    gram = hmat.T @ hmat / n
    target = hmat.mean(axis=0) - f.mean(axis=0) * g.mean(axis=0)
    lam, singular = solve_gram(gram, target)
    if singular:
        # a redundant basis: take the minimum-norm multiplier instead of the ridge one
        lam = np.linalg.lstsq(gram, target, rcond=1e-12)[0]
    weights = 1.0 - hmat @ lam
    resid = weights @ hmat / n - f.mean(axis=0) * g.mean(axis=0)
    cond = condition_number(gram)
    if np.max(np.abs(resid)) > 1e3 * CONSTRAINT_TOL:
        raise NumericalError(f"balancing constraints cannot be met (condition number {cond:.3g})")
    return BalanceWeights(weights, lam, resid, basis, singular, cond)


def write_weights_csv(path: str | Path, weights: BalanceWeights, row_index: Sequence[int] | None = None) -> None:
    rows = range(len(weights.weights)) if row_index is None else row_index
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["row", "weight"])
        for i, w in zip(rows, weights.weights):
            out.writerow([int(i), repr(float(w))])


def weighted_psi_L(nuis: Nuisances, k: int, config: EstimatorConfig = EstimatorConfig(),
                   basis: MomentBasis | None = None) -> FoldEstimate:
    """LOCO with balancing weights in both the nuisance fits and the fold average.

    Weights are solved on the training rows of fold ``k``; the evaluation
    rows receive ``1 - h(x, z)' lambda`` with the same ``lambda``.
    """
    data = nuis.data
    train, rows = nuis.train_rows(k), nuis.eval_rows(k)
    xt, zt = data.x_block[train], data.z_block[train]
    if basis is None:
        basis = default_basis(xt, zt, config.balance_x_degree, config.balance_z_degree,
                              config.balance_max_terms)
    bw = solve_balance_weights(xt, zt, basis)
    x, z, y = data.x_block[rows], data.z_block[rows], data.y[rows]
    w_eval = bw.weights_for(x, z)
    if np.all(bw.weights == 1.0):
        weighted = nuis
    else:
        full = np.zeros(data.n)
        full[train] = bw.weights
        weighted = Nuisances(data, nuis.folds, nuis.spec, nuis.seed, nuis.overrides, nuis.shuffled, full)
    loss = (y - weighted.mu_z(k, z)) ** 2 - (y - weighted.mu_xz(k, x, z)) ** 2
    value = float(w_eval @ loss / w_eval.sum())
    diag = {"negative_weight_fraction": bw.negative_fraction, "basis_size": basis.k,
            "condition": bw.condition, "ridge_fallback": weighted.flagged()}
    return FoldEstimate("psi_L_weighted", k, value, len(rows), False, diag)
