"""Regression forest on binned features, compiled with numba.

Features are quantile-binned once per fit (at most ``MAX_BINS`` bins per
coordinate); each tree is grown on a bootstrap resample by exhaustive
search over bin thresholds of ``mtry`` randomly chosen coordinates,
using the usual variance-reduction criterion.  Leaves hold the mean
response of the resampled rows they contain, so every prediction lies
within the range of the training targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

MAX_BINS = 128


def make_cuts(features: np.ndarray, max_bins: int = MAX_BINS) -> list[np.ndarray]:
    cuts = []
    for j in range(features.shape[1]):
        x = features[:, j]
        uniq = np.unique(x)
        if uniq.size <= max_bins:
            c = (uniq[:-1] + uniq[1:]) / 2
        else:
            c = np.unique(np.quantile(x, np.linspace(0, 1, max_bins + 1)[1:-1]))
        cuts.append(c.astype(np.float64))
    return cuts


def bin_features(features: np.ndarray, cuts: list[np.ndarray]) -> np.ndarray:
    out = np.empty(features.shape, dtype=np.uint8)
    for j, c in enumerate(cuts):
        # bin = number of cuts strictly below x, so "bin <= b" <=> "x <= cuts[b]"
        out[:, j] = np.searchsorted(c, features[:, j], side="left")
    return out


@numba.njit(cache=True)
def _grow_forest(xb, y, n_bins, n_trees, mtry, min_leaf, bootstrap, cdf, seed):
    np.random.seed(seed)
    n, p = xb.shape
    max_nodes = 2 * (n // min_leaf) + 3
    total = n_trees * max_nodes
    feat = np.full(total, -1, np.int32)
    thr = np.zeros(total, np.int32)
    left = np.full(total, -1, np.int32)
    right = np.full(total, -1, np.int32)
    value = np.zeros(total, np.float64)
    offsets = np.zeros(n_trees + 1, np.int64)

    idx = np.empty(n, np.int64)
    order = np.empty(p, np.int64)
    hsum = np.zeros(256, np.float64)
    hcnt = np.zeros(256, np.int64)
    stack_node = np.empty(max_nodes, np.int64)
    stack_lo = np.empty(max_nodes, np.int64)
    stack_hi = np.empty(max_nodes, np.int64)

    used = 0
    for t in range(n_trees):
        base = used
        offsets[t] = base
        if bootstrap:
            for i in range(n):
                if cdf.shape[0] > 0:
                    idx[i] = np.searchsorted(cdf, np.random.random() * cdf[-1], side="right")
                    if idx[i] >= n:
                        idx[i] = n - 1
                else:
                    idx[i] = np.random.randint(0, n)
        else:
            for i in range(n):
                idx[i] = i
        n_nodes = 1
        top = 0
        stack_node[0] = 0
        stack_lo[0] = 0
        stack_hi[0] = n
        top = 1
        while top > 0:
            top -= 1
            node = stack_node[top]
            lo = stack_lo[top]
            hi = stack_hi[top]
            cnt = hi - lo
            s = 0.0
            ss = 0.0
            for i in range(lo, hi):
                v = y[idx[i]]
                s += v
                ss += v * v
            mean = s / cnt
            value[base + node] = mean
            if cnt < 2 * min_leaf or ss - s * mean <= 1e-12 * (ss + 1e-300):
                continue
            for j in range(p):
                order[j] = j
            best_gain = s * mean + 1e-12 * abs(s * mean) + 1e-300
            best_f = -1
            best_b = -1
            tried = 0
            for k in range(p):
                r = k + np.random.randint(0, p - k)
                tmp = order[k]
                order[k] = order[r]
                order[r] = tmp
                f = order[k]
                nb = n_bins[f]
                if nb < 2:
                    continue
                for b in range(nb):
                    hsum[b] = 0.0
                    hcnt[b] = 0
                for i in range(lo, hi):
                    b = xb[idx[i], f]
                    hsum[b] += y[idx[i]]
                    hcnt[b] += 1
                sl = 0.0
                cl = 0
                valid = False
                for b in range(nb - 1):
                    sl += hsum[b]
                    cl += hcnt[b]
                    cr = cnt - cl
                    if cl < min_leaf:
                        continue
                    if cr < min_leaf:
                        break
                    valid = True
                    sr = s - sl
                    gain = sl * sl / cl + sr * sr / cr
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        best_b = b
                if valid:
                    tried += 1
                    if tried >= mtry:
                        break
            if best_f < 0:
                continue
            # partition idx[lo:hi] on the chosen threshold
            i = lo
            j = hi - 1
            while i <= j:
                if xb[idx[i], best_f] <= best_b:
                    i += 1
                else:
                    tmp = idx[i]
                    idx[i] = idx[j]
                    idx[j] = tmp
                    j -= 1
            feat[base + node] = best_f
            thr[base + node] = best_b
            left[base + node] = n_nodes
            right[base + node] = n_nodes + 1
            stack_node[top] = n_nodes
            stack_lo[top] = lo
            stack_hi[top] = i
            top += 1
            stack_node[top] = n_nodes + 1
            stack_lo[top] = i
            stack_hi[top] = hi
            top += 1
            n_nodes += 2
        used = base + n_nodes
    offsets[n_trees] = used
    return feat[:used], thr[:used], left[:used], right[:used], value[:used], offsets


@numba.njit(cache=True)
def _predict_forest(xb, feat, thr, left, right, value, offsets):
    m = xb.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.zeros(m, np.float64)
    for i in range(m):
        acc = 0.0
        for t in range(n_trees):
            base = offsets[t]
            node = 0
            while feat[base + node] >= 0:
                if xb[i, feat[base + node]] <= thr[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            acc += value[base + node]
        out[i] = acc / n_trees
    return out


@dataclass(frozen=True)
class ForestFit:
    cuts: tuple[np.ndarray, ...]
    feat: np.ndarray
    thr: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    offsets: np.ndarray

    def predict(self, features: np.ndarray) -> np.ndarray:
        if features.shape[0] == 0:
            return np.zeros(0)
        xb = bin_features(features, list(self.cuts))
        return _predict_forest(xb, self.feat, self.thr, self.left, self.right, self.value, self.offsets)


def fit_forest(features: np.ndarray, target: np.ndarray, n_trees: int, min_leaf: int,
               mtry_fraction: float, bootstrap: bool, seed: int,
               weights: np.ndarray | None = None) -> ForestFit:
    n, p = features.shape
    cuts = make_cuts(features)
    xb = bin_features(features, cuts)
    n_bins = np.array([len(c) + 1 for c in cuts], dtype=np.int64)
    mtry = max(1, int(np.ceil(mtry_fraction * p)))
    if weights is None:
        cdf = np.zeros(0)
    else:
        # resampling probabilities proportional to the positive part of the weights
        cdf = np.cumsum(np.clip(np.asarray(weights, dtype=np.float64), 0.0, None))
        if not cdf[-1] > 0:
            raise ValueError("forest weights have no positive mass")
    arrays = _grow_forest(xb, np.ascontiguousarray(target, dtype=np.float64), n_bins,
                          int(n_trees), mtry, int(min_leaf), bool(bootstrap), cdf, int(seed))
    return ForestFit(tuple(cuts), *arrays)
