"""Additive model: one penalised cubic B-spline per coordinate.

The fit is a single penalised least-squares problem over the
concatenated per-coordinate bases (no backfitting needed at these
sizes).  Each block is centred so the intercept is the only constant,
and the smoothing parameter shared by all blocks is chosen by 2-fold
cross-validation over a fixed grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

from decorrvi.linalg import solve_gram
from decorrvi.rng import named_rng

_CHUNK = 50_000


@dataclass(frozen=True)
class _Term:
    column: int
    knots: np.ndarray
    lo: float
    hi: float
    means: np.ndarray  # training means of the retained basis columns


@dataclass(frozen=True)
class AdditiveDesign:
    terms: tuple[_Term, ...]
    degree: int
    width: int

    def matrix(self, features: np.ndarray) -> np.ndarray:
        blocks = [self._block(t, features[:, t.column]) - t.means for t in self.terms]
        if not blocks:
            return np.zeros((features.shape[0], 0))
        return np.hstack(blocks)

    def _block(self, term: _Term, x: np.ndarray) -> np.ndarray:
        xc = np.clip(x, term.lo, term.hi)
        full = BSpline.design_matrix(xc, term.knots, self.degree).toarray()
        # dropping one column removes the constant direction of the block
        return full[:, 1:]


def build_design(features: np.ndarray, knots_per_dim: int, degree: int,
                 weights: np.ndarray | None = None) -> tuple[AdditiveDesign, np.ndarray, np.ndarray]:
    """Knots at sample quantiles; returns the design, its matrix and the penalty."""
    n, p = features.shape
    w = np.ones(n) if weights is None else weights
    terms = []
    pens = []
    for j in range(p):
        x = features[:, j]
        lo, hi = float(x.min()), float(x.max())
        if not hi > lo:
            continue
        qs = np.quantile(x, np.linspace(0, 1, knots_per_dim + 2)[1:-1])
        interior = np.unique(qs[(qs > lo) & (qs < hi)])
        knots = np.concatenate([[lo] * (degree + 1), interior, [hi] * (degree + 1)])
        m = len(knots) - degree - 1
        full = BSpline.design_matrix(x, knots, degree).toarray()[:, 1:]
        means = w @ full / w.sum()
        terms.append(_Term(j, knots, lo, hi, means))
        d2 = np.diff(np.eye(m), n=2, axis=0)[:, 1:] if m >= 3 else np.zeros((0, m - 1))
        pens.append(d2.T @ d2)
    design = AdditiveDesign(tuple(terms), degree, sum(len(t.means) for t in terms))
    penalty = _block_diag(pens)
    return design, design.matrix(features), penalty


def _block_diag(blocks: list[np.ndarray]) -> np.ndarray:
    size = sum(b.shape[0] for b in blocks)
    out = np.zeros((size, size))
    i = 0
    for b in blocks:
        k = b.shape[0]
        out[i:i + k, i:i + k] = b
        i += k
    return out


@dataclass(frozen=True)
class AdditiveFit:
    design: AdditiveDesign
    intercept: np.ndarray  # (q,)
    coef: np.ndarray  # (width, q)
    penalty_choice: tuple[float, ...]
    jittered: bool

    def predict(self, features: np.ndarray) -> np.ndarray:
        m = features.shape[0]
        out = np.empty((m, self.coef.shape[1]))
        for s in range(0, m, _CHUNK):
            rows = features[s:s + _CHUNK]
            out[s:s + _CHUNK] = self.intercept + self.design.matrix(rows) @ self.coef
        return out


def _penalised_solve(bw, b, y, sw, lam, penalty):
    gram = b.T @ bw / sw + lam * penalty
    rhs = bw.T @ y / sw
    return solve_gram(gram, rhs)


def fit_additive(features: np.ndarray, targets: np.ndarray, knots_per_dim: int, degree: int,
                 ridge_grid, seed: int, weights: np.ndarray | None = None) -> AdditiveFit:
    n = features.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    design, b, penalty = build_design(features, knots_per_dim, degree, w)
    sw = w.sum()
    ybar = w @ targets / sw
    yc = targets - ybar
    q = targets.shape[1]
    if design.width == 0:
        return AdditiveFit(design, ybar, np.zeros((0, q)), (0.0,) * q, False)

    perm = named_rng(seed, "additive-cv").permutation(n)
    halves = (perm[: n // 2], perm[n // 2:])
    grams = []
    for idx in halves:
        bw = b[idx] * w[idx, None]
        grams.append((idx, bw.T @ b[idx] / w[idx].sum(), bw, w[idx].sum()))

    bw_all = b * w[:, None]
    gram_all = bw_all.T @ b / sw
    coef = np.empty((design.width, q))
    chosen = []
    jittered = False
    for col in range(q):
        errs = []
        for lam in ridge_grid:
            err = 0.0
            for k, (idx, gram, bw, swk) in enumerate(grams):
                other = halves[1 - k]
                c, _ = solve_gram(gram + lam * penalty, bw.T @ yc[idx, col] / swk)
                resid = yc[other, col] - b[other] @ c
                err += float(resid @ resid)
            errs.append(err)
        lam = ridge_grid[int(np.argmin(errs))]
        chosen.append(lam)
        c, jit = solve_gram(gram_all + lam * penalty, bw_all.T @ yc[:, col] / sw)
        coef[:, col] = c
        jittered |= jit
    return AdditiveFit(design, ybar, coef, tuple(chosen), jittered)
