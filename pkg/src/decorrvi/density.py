"""Product-Gaussian kernel density estimates, sampling and density ratios."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from decorrvi.errors import DegenerateError, InsufficientDataError
from decorrvi.rng import named_rng

DEFAULT_CLIP_MAX = 50.0
DEFAULT_MC_DRAWS = 1000

_CHUNK_ELEMS = 4_000_000


@dataclass(frozen=True)
class KdeModel:
    """Equal-weight mixture of axis-aligned Gaussians centred at ``points``."""

    points: np.ndarray
    bandwidths: np.ndarray

    def __post_init__(self) -> None:
        if np.any(~(self.bandwidths > 0)):
            raise DegenerateError("KDE bandwidths must be strictly positive")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def log_density(self, queries: np.ndarray) -> np.ndarray:
        q = np.asarray(queries, dtype=np.float64).reshape(-1, self.dim)
        n = self.points.shape[0]
        scaled_pts = self.points / self.bandwidths
        const = -math.log(n) - self.dim * 0.5 * math.log(2 * math.pi) - np.sum(np.log(self.bandwidths))
        out = np.empty(q.shape[0])
        step = max(1, _CHUNK_ELEMS // max(1, n * self.dim))
        for s in range(0, q.shape[0], step):
            qs = q[s:s + step] / self.bandwidths
            # squared distances via the expansion |a|^2 - 2ab + |b|^2, clipped for round-off
            d2 = (np.sum(qs ** 2, axis=1)[:, None] - 2 * qs @ scaled_pts.T
                  + np.sum(scaled_pts ** 2, axis=1)[None, :])
            out[s:s + step] = logsumexp(-0.5 * np.maximum(d2, 0.0), axis=1) + const
        return out

    def density(self, queries: np.ndarray) -> np.ndarray:
        return np.exp(self.log_density(queries))


def scott_bandwidths(points: np.ndarray) -> np.ndarray:
    n, d = points.shape
    return points.std(axis=0) * n ** (-1.0 / (d + 4))


def fit_kde(points: np.ndarray) -> KdeModel:
    """Product-Gaussian KDE with Scott's rule ``h_j = sd_j * n^(-1/(d+4))``."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] < 2:
        raise InsufficientDataError("a KDE needs at least two points")
    bw = scott_bandwidths(pts)
    if np.any(bw <= 0):
        bad = [j for j in range(pts.shape[1]) if bw[j] <= 0]
        raise DegenerateError(f"constant coordinate(s) {bad}: degenerate bandwidth")
    pts = pts.copy()
    pts.flags.writeable = False
    return KdeModel(pts, bw)


def kde_sample(model: KdeModel, count: int, seed: int) -> np.ndarray:
    """``count`` i.i.d. draws: a uniformly chosen point plus scaled Gaussian noise."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = named_rng(seed, "kde-sample")
    pick = rng.integers(0, model.points.shape[0], size=count)
    noise = rng.standard_normal((count, model.dim))
    return model.points[pick] + noise * model.bandwidths


def log_density_ratio(kde_x: KdeModel, kde_z: KdeModel, kde_xz: KdeModel,
                      x: np.ndarray, z: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1, kde_x.dim)
    z = np.asarray(z, dtype=np.float64).reshape(x.shape[0], kde_z.dim)
    return kde_x.log_density(x) + kde_z.log_density(z) - kde_xz.log_density(np.hstack([x, z]))


def density_ratios(kde_x: KdeModel, kde_z: KdeModel, kde_xz: KdeModel, x: np.ndarray,
                   z: np.ndarray, clip_max: float = DEFAULT_CLIP_MAX) -> np.ndarray:
    """Row-wise ``min(p(x) p(z) / p(x, z), clip_max)``, computed on the log scale."""
    if kde_xz.dim != kde_x.dim + kde_z.dim:
        raise ValueError("joint KDE dimension must equal dim(x) + dim(z)")
    lr = log_density_ratio(kde_x, kde_z, kde_xz, x, z)
    if math.isinf(clip_max):
        return np.exp(lr)
    capped = lr >= math.log(clip_max)
    return np.where(capped, clip_max, np.exp(np.where(capped, 0.0, lr)))


def density_ratio(kde_x: KdeModel, kde_z: KdeModel, kde_xz: KdeModel, x_row, z_row,
                  clip_max: float = DEFAULT_CLIP_MAX) -> float:
    """Clipped density ratio at a single ``(x, z)``."""
    return float(density_ratios(kde_x, kde_z, kde_xz, np.atleast_1d(x_row)[None, :],
                                np.atleast_1d(z_row)[None, :], clip_max)[0])
