"""Guarded solves for the small symmetric systems used throughout."""

from __future__ import annotations

import numpy as np

JITTER = 1e-8
RANK_TOL = 1e-12


def solve_gram(gram: np.ndarray, rhs: np.ndarray, jitter: float = JITTER) -> tuple[np.ndarray, bool]:
    """Solve ``gram @ x = rhs`` for a symmetric PSD ``gram``.

    Returns ``(x, singular)``.  A numerically rank-deficient system is
    solved with a ridge of ``jitter`` (relative to the largest diagonal
    entry) and reported as singular; callers decide what that means.
    """
    gram = np.atleast_2d(np.asarray(gram, dtype=np.float64))
    rhs = np.asarray(rhs, dtype=np.float64)
    p = gram.shape[0]
    if p == 0:
        return np.zeros(rhs.shape), False
    sym = (gram + gram.T) / 2
    scale = float(np.max(np.abs(np.diag(sym))))
    if not np.isfinite(scale) or scale == 0.0:
        return np.zeros(rhs.shape), True
    eig = np.linalg.eigvalsh(sym)
    singular = bool(eig[0] <= RANK_TOL * eig[-1])
    if singular:
        sym = sym + jitter * scale * np.eye(p)
    try:
        return np.linalg.solve(sym, rhs), singular
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(sym, rhs, rcond=None)[0], True


def condition_number(gram: np.ndarray) -> float:
    gram = np.atleast_2d(gram)
    if gram.size == 0:
        return 1.0
    eig = np.linalg.eigvalsh((gram + gram.T) / 2)
    if eig[-1] <= 0:
        return float("inf")
    return float(eig[-1] / eig[0]) if eig[0] > 0 else float("inf")


def nearest_psd(mat: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Symmetrise and clip eigenvalues from below at ``floor``."""
    sym = (mat + np.swapaxes(mat, -1, -2)) / 2
    w, v = np.linalg.eigh(sym)
    w = np.maximum(w, floor)
    return (v * w[..., None, :]) @ np.swapaxes(v, -1, -2)
