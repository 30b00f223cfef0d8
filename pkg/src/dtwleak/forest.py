"""Random forest built from scratch: binned CART trees, Gini splits, bagging.

Feature values are quantized once per fit to at most ``MAX_BINS`` per-feature
codes (exact when a feature has that few distinct values, rank quantiles
otherwise); node split search then scans class histograms per candidate bin
boundary.  Each tree draws its bootstrap sample and per-node feature subsets
from its own splitmix64 stream seeded by (forest seed, tree index), so
training is deterministic for a given seed no matter how many threads run.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

MAX_BINS = 256

_U64 = np.uint64
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK64 = (1 << 64) - 1


def splitmix64_py(state: int) -> tuple[int, int]:
    """One splitmix64 step in plain Python; returns (next_state, output)."""
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    z = z ^ (z >> 31)
    return state, z


def derive_seeds(seed: int, count: int) -> np.ndarray:
    """Per-worker uint64 seeds derived from one master seed."""
    state = seed & _MASK64
    out = np.empty(count, dtype=np.uint64)
    for i in range(count):
        state, z = splitmix64_py(state)
        out[i] = z
    return out


@njit(cache=True, inline="always")
def _mix(state):
    state = state + _U64(_GOLDEN)
    z = state
    z = (z ^ (z >> _U64(30))) * _U64(_MIX1)
    z = (z ^ (z >> _U64(27))) * _U64(_MIX2)
    z = z ^ (z >> _U64(31))
    return state, z


@njit(cache=True)
def _fit_tree(codes, y, n_classes, n_bins, priors, mtry, max_depth, min_leaf, seed,
              feature, threshold_bin, left, right, leaf):
    n, d = codes.shape
    state = seed

    idx = np.empty(n, dtype=np.int64)
    for i in range(n):
        state, z = _mix(state)
        idx[i] = np.int64(z % _U64(n))

    tmp = np.empty(n, dtype=np.int64)
    feat_perm = np.arange(d)
    hist = np.zeros((MAX_BINS, n_classes), dtype=np.int64)
    counts = np.zeros(n_classes, dtype=np.int64)
    left_counts = np.zeros(n_classes, dtype=np.int64)

    max_stack = 2 * n + 2
    st_node = np.empty(max_stack, dtype=np.int64)
    st_start = np.empty(max_stack, dtype=np.int64)
    st_end = np.empty(max_stack, dtype=np.int64)
    st_depth = np.empty(max_stack, dtype=np.int64)

    node_count = 1
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0

    while top >= 0:
        node = st_node[top]
        s = st_start[top]
        e = st_end[top]
        depth = st_depth[top]
        top -= 1
        total = e - s

        counts[:] = 0
        for k in range(s, e):
            counts[y[idx[k]]] += 1
        n_nonzero = 0
        for c in range(n_classes):
            if counts[c] > 0:
                n_nonzero += 1

        make_leaf = (n_nonzero <= 1 or total < 2 * min_leaf
                     or (max_depth >= 0 and depth >= max_depth))

        best_f = -1
        best_b = -1
        if not make_leaf:
            parent_score = 0.0
            for c in range(n_classes):
                parent_score += counts[c] * counts[c]
            parent_score /= total
            best_score = parent_score + 1e-9

            for t in range(mtry):
                state, z = _mix(state)
                r = np.int64(z % _U64(d - t))
                f = feat_perm[t + r]
                feat_perm[t + r] = feat_perm[t]
                feat_perm[t] = f

                nb = n_bins[f]
                for b in range(nb):
                    for c in range(n_classes):
                        hist[b, c] = 0
                for k in range(s, e):
                    hist[codes[idx[k], f], y[idx[k]]] += 1

                left_counts[:] = 0
                n_l = 0
                for b in range(nb - 1):
                    for c in range(n_classes):
                        left_counts[c] += hist[b, c]
                        n_l += hist[b, c]
                    if n_l < min_leaf:
                        continue
                    n_r = total - n_l
                    if n_r < min_leaf:
                        break
                    score_l = 0.0
                    score_r = 0.0
                    for c in range(n_classes):
                        cl = left_counts[c]
                        cr = counts[c] - cl
                        score_l += cl * cl
                        score_r += cr * cr
                    score = score_l / n_l + score_r / n_r
                    if score > best_score:
                        best_score = score
                        best_f = f
                        best_b = b
            if best_f < 0:
                make_leaf = True

        if make_leaf:
            best_c = 0
            for c in range(1, n_classes):
                if counts[c] > counts[best_c] or (
                        counts[c] == counts[best_c] and priors[c] > priors[best_c]):
                    best_c = c
            feature[node] = -1
            leaf[node] = best_c
            continue

        # stable partition of idx[s:e] on code <= best_b
        pos = 0
        for k in range(s, e):
            if codes[idx[k], best_f] <= best_b:
                tmp[pos] = idx[k]
                pos += 1
        mid = s + pos
        for k in range(s, e):
            if codes[idx[k], best_f] > best_b:
                tmp[pos] = idx[k]
                pos += 1
        for k in range(total):
            idx[s + k] = tmp[k]

        lc = node_count
        rc = node_count + 1
        node_count += 2
        feature[node] = best_f
        threshold_bin[node] = best_b
        left[node] = lc
        right[node] = rc

        top += 1
        st_node[top] = rc
        st_start[top] = mid
        st_end[top] = e
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lc
        st_start[top] = s
        st_end[top] = mid
        st_depth[top] = depth + 1

    return node_count


@njit(cache=True, parallel=True)
def _fit_forest(codes, y, n_classes, n_bins, priors, mtry, max_depth, min_leaf, seeds,
                feature, threshold_bin, left, right, leaf, node_counts):
    n_trees = seeds.shape[0]
    for t in prange(n_trees):
        node_counts[t] = _fit_tree(codes, y, n_classes, n_bins, priors, mtry,
                                   max_depth, min_leaf, seeds[t],
                                   feature[t], threshold_bin[t], left[t], right[t], leaf[t])


@njit(cache=True, parallel=True)
def _predict_votes(X, feature, threshold, left, right, leaf, votes):
    n = X.shape[0]
    n_trees = feature.shape[0]
    for i in prange(n):
        for t in range(n_trees):
            node = 0
            while feature[t, node] >= 0:
                if X[i, feature[t, node]] <= threshold[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
            votes[i, leaf[t, node]] += 1


def bin_features(X: np.ndarray):
    """Per-feature code matrix plus the representative value of each bin.

    A bin's representative is its largest value in the fit data; the split
    rule ``x <= rep[bin]`` therefore reproduces the binned partition exactly
    on that data.
    """
    n, d = X.shape
    codes = np.empty((n, d), dtype=np.uint8)
    reps: list[np.ndarray] = []
    n_bins = np.empty(d, dtype=np.int64)
    for f in range(d):
        uniq = np.unique(X[:, f])
        if uniq.size > MAX_BINS:
            pick = np.round(np.linspace(0, uniq.size - 1, MAX_BINS)).astype(np.int64)
            uniq = uniq[pick]
        codes[:, f] = np.searchsorted(uniq, X[:, f], side="left").astype(np.uint8)
        reps.append(uniq)
        n_bins[f] = uniq.size
    return codes, reps, n_bins
