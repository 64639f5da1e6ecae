"""Compiled kernels for binary decision trees and forests.

Everything here operates on plain numpy arrays so a whole grid cell
(cross-validation, refit and test scoring) runs in one compiled call.
Trees are stored flattened: several trees share one set of node arrays and
``roots`` holds each tree's root index.
"""
import numpy as np
from numba import njit

GINI = 0
ENTROPY = 1

CW_NONE = 0
CW_BALANCED = 1
CW_BALANCED_SUBSAMPLE = 2

# Two splits whose gains differ by less than this are treated as tied.
GAIN_TOL = 1e-12

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def derive_seed(seed, index):
    """Child seed for ``index`` under ``seed`` (splitmix64 finaliser)."""
    s = np.uint64(seed)
    i = np.uint64(index)
    return _mix64(_mix64(s + _GOLDEN) ^ (i * _GOLDEN + np.uint64(1)))


@njit(cache=True)
def _next(state):
    state[0] += _GOLDEN
    return _mix64(state[0])


@njit(cache=True)
def _randbelow(state, k):
    u = np.float64(_next(state) >> np.uint64(11)) * _INV53
    r = np.int64(u * k)
    if r >= k:
        r = k - 1
    return r


@njit(cache=True)
def node_impurity(c0, c1, criterion):
    tot = c0 + c1
    if tot <= 0.0:
        return 0.0
    p0 = c0 / tot
    p1 = c1 / tot
    if criterion == GINI:
        return 1.0 - p0 * p0 - p1 * p1
    h = 0.0
    if p0 > 0.0:
        h -= p0 * np.log2(p0)
    if p1 > 0.0:
        h -= p1 * np.log2(p1)
    return h


@njit(cache=True)
def _sort_pairs(keys, items, lo, hi):
    """Sort ``keys[lo:hi]`` ascending, permuting ``items`` alongside."""
    stack = np.empty(128, np.int64)
    sp = 0
    stack[0] = lo
    stack[1] = hi
    sp = 2
    while sp > 0:
        sp -= 2
        a = stack[sp]
        b = stack[sp + 1]
        while b - a > 16:
            m = (a + b) >> 1
            # median of three into keys[m]
            if keys[m] < keys[a]:
                keys[m], keys[a] = keys[a], keys[m]
                items[m], items[a] = items[a], items[m]
            if keys[b - 1] < keys[m]:
                keys[m], keys[b - 1] = keys[b - 1], keys[m]
                items[m], items[b - 1] = items[b - 1], items[m]
                if keys[m] < keys[a]:
                    keys[m], keys[a] = keys[a], keys[m]
                    items[m], items[a] = items[a], items[m]
            pivot = keys[m]
            i = a
            j = b - 1
            while i <= j:
                while keys[i] < pivot:
                    i += 1
                while keys[j] > pivot:
                    j -= 1
                if i <= j:
                    keys[i], keys[j] = keys[j], keys[i]
                    items[i], items[j] = items[j], items[i]
                    i += 1
                    j -= 1
            # recurse into the smaller side via the stack
            if j + 1 - a < b - i:
                stack[sp] = i
                stack[sp + 1] = b
                sp += 2
                b = j + 1
            else:
                stack[sp] = a
                stack[sp + 1] = j + 1
                sp += 2
                a = i
        for i in range(a + 1, b):
            k = keys[i]
            it = items[i]
            j = i - 1
            while j >= a and keys[j] > k:
                keys[j + 1] = keys[j]
                items[j + 1] = items[j]
                j -= 1
            keys[j + 1] = k
            items[j + 1] = it


@njit(cache=True)
def scan_feature(X, y, w, idx, start, end, f, criterion, min_leaf,
                 parent_imp, wc0, wc1, keys):
    """Best threshold on feature ``f`` for rows ``idx[start:end]``.

    Sorts ``idx[start:end]`` by the feature in place (``keys`` is scratch of
    at least ``end`` entries). Returns ``(gain, threshold)``; gain is -inf
    when no threshold separates the rows while respecting ``min_leaf``.
    """
    for i in range(start, end):
        keys[i] = X[idx[i], f]
    return _scan_sorted(X, y, w, idx, start, end, criterion, min_leaf,
                        parent_imp, wc0, wc1, keys)


@njit(cache=True)
def _scan_sorted(X, y, w, idx, start, end, criterion, min_leaf, parent_imp,
                 wc0, wc1, keys):
    m = end - start
    _sort_pairs(keys, idx, start, end)
    W = wc0 + wc1
    best_gain = -np.inf
    best_thr = 0.0
    l0 = 0.0
    l1 = 0.0
    for i in range(start, end - 1):
        r = idx[i]
        if y[r] == 0:
            l0 += w[r]
        else:
            l1 += w[r]
        a = keys[i]
        b = keys[i + 1]
        if a == b:
            continue
        nl = i + 1 - start
        if nl < min_leaf or m - nl < min_leaf:
            continue
        r0 = wc0 - l0
        r1 = wc1 - l1
        wl = l0 + l1
        wr = r0 + r1
        gain = parent_imp - (wl * node_impurity(l0, l1, criterion)
                             + wr * node_impurity(r0, r1, criterion)) / W
        if gain > best_gain + GAIN_TOL:
            best_gain = gain
            t = 0.5 * (a + b)
            if t >= b:
                t = a
            best_thr = t
    return best_gain, best_thr


@njit(cache=True)
def _better(gain, f, thr, best_gain, best_f, best_thr):
    if gain > best_gain + GAIN_TOL:
        return True
    if gain >= best_gain - GAIN_TOL:
        if best_f < 0 or f < best_f or (f == best_f and thr < best_thr):
            return True
    return False


@njit(cache=True)
def best_split_rows(X, y, w, idx, start, end, feats, criterion, min_leaf):
    """Exhaustive split search over the candidate columns ``feats``."""
    wc0 = 0.0
    wc1 = 0.0
    for i in range(start, end):
        r = idx[i]
        if y[r] == 0:
            wc0 += w[r]
        else:
            wc1 += w[r]
    parent = node_impurity(wc0, wc1, criterion)
    keys = np.empty(idx.size)
    best_gain = -np.inf
    best_f = -1
    best_thr = 0.0
    for f in feats:
        g, t = scan_feature(X, y, w, idx, start, end, f, criterion, min_leaf,
                            parent, wc0, wc1, keys)
        if g == -np.inf:
            continue
        if _better(g, f, t, best_gain, best_f, best_thr):
            best_gain = g
            best_f = f
            best_thr = t
    return best_f, best_thr, best_gain


@njit(cache=True)
def dense_ranks(X):
    """Per-column dense ranks of ``X`` plus the value behind each rank."""
    n, d = X.shape
    ranks = np.empty((n, d), np.int64)
    rank_vals = np.zeros((d, max(n, 1)))
    n_ranks = np.zeros(d, np.int64)
    for f in range(d):
        col = X[:, f].copy()
        order = np.argsort(col, kind="mergesort")
        r = -1
        prev = np.nan
        for i in range(n):
            v = col[order[i]]
            if r < 0 or v != prev:
                r += 1
                rank_vals[f, r] = v
                prev = v
            ranks[order[i], f] = r
        n_ranks[f] = r + 1
    return ranks, rank_vals, n_ranks


@njit(cache=True)
def _scan_hist(ranks, rank_vals, f, lo, hi, y, w, idx, start, end, criterion,
               min_leaf, parent_imp, wc0, wc1, h0, h1, hc):
    """Histogram version of the threshold scan over ranks ``lo..hi``.

    Enumerates the same candidate partitions as the sorted scan.
    """
    m = end - start
    for i in range(start, end):
        r = idx[i]
        k = ranks[r, f]
        hc[k] += 1
        if y[r] == 0:
            h0[k] += w[r]
        else:
            h1[k] += w[r]
    W = wc0 + wc1
    best_gain = -np.inf
    best_thr = 0.0
    l0 = 0.0
    l1 = 0.0
    nl = 0
    prev = -1
    for k in range(lo, hi + 1):
        if hc[k] == 0:
            continue
        if prev >= 0 and nl >= min_leaf and m - nl >= min_leaf:
            r0 = wc0 - l0
            r1 = wc1 - l1
            wl = l0 + l1
            wr = r0 + r1
            gain = parent_imp - (wl * node_impurity(l0, l1, criterion)
                                 + wr * node_impurity(r0, r1, criterion)) / W
            if gain > best_gain + GAIN_TOL:
                best_gain = gain
                a = rank_vals[f, prev]
                b = rank_vals[f, k]
                t = 0.5 * (a + b)
                if t >= b:
                    t = a
                best_thr = t
        l0 += h0[k]
        l1 += h1[k]
        nl += hc[k]
        prev = k
    for i in range(start, end):
        k = ranks[idx[i], f]
        hc[k] = 0
        h0[k] = 0.0
        h1[k] = 0.0
    return best_gain, best_thr


@njit(cache=True)
def _grow(X, ranks, rank_vals, y, w, rows, max_features, criterion,
          min_split, min_leaf, max_depth, state, feature, threshold, left,
          right, value, n_samples, w_samples, impurity, offset):
    """Grow one tree into the node arrays starting at ``offset``.

    Returns the number of nodes written.
    """
    d = X.shape[1]
    n = rows.size
    idx = rows.copy()
    keys = np.empty(n)
    h0 = np.zeros(rank_vals.shape[1])
    h1 = np.zeros(rank_vals.shape[1])
    hc = np.zeros(rank_vals.shape[1], np.int64)
    perm = np.arange(d)
    stack_node = np.empty(n + 2, np.int64)
    stack_start = np.empty(n + 2, np.int64)
    stack_end = np.empty(n + 2, np.int64)
    stack_depth = np.empty(n + 2, np.int64)
    stack_node[0] = offset
    stack_start[0] = 0
    stack_end[0] = n
    stack_depth[0] = 0
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        s = stack_start[sp]
        e = stack_end[sp]
        depth = stack_depth[sp]
        m = e - s
        wc0 = 0.0
        wc1 = 0.0
        for i in range(s, e):
            r = idx[i]
            if y[r] == 0:
                wc0 += w[r]
            else:
                wc1 += w[r]
        W = wc0 + wc1
        imp = node_impurity(wc0, wc1, criterion)
        feature[node] = -1
        left[node] = -1
        right[node] = -1
        threshold[node] = 0.0
        if W > 0.0:
            value[node, 0] = wc0 / W
            value[node, 1] = wc1 / W
        n_samples[node] = m
        w_samples[node] = W
        impurity[node] = imp
        if (m < min_split or m < 2 * min_leaf or imp <= GAIN_TOL
                or (max_depth >= 0 and depth >= max_depth)):
            continue

        best_gain = -np.inf
        best_f = -1
        best_thr = 0.0
        visited = 0
        j = 0
        # constant columns are drawn but do not use up the max_features budget
        while j < d and visited < max_features:
            k = j + _randbelow(state, d - j)
            tmp = perm[j]
            perm[j] = perm[k]
            perm[k] = tmp
            f = perm[j]
            j += 1
            lo = ranks[idx[s], f]
            hi = lo
            for i in range(s + 1, e):
                v = ranks[idx[i], f]
                if v < lo:
                    lo = v
                elif v > hi:
                    hi = v
            if lo == hi:
                continue
            visited += 1
            if hi - lo < 8 * m:
                g, t = _scan_hist(ranks, rank_vals, f, lo, hi, y, w, idx, s,
                                  e, criterion, min_leaf, imp, wc0, wc1, h0,
                                  h1, hc)
            else:
                for i in range(s, e):
                    keys[i] = X[idx[i], f]
                g, t = _scan_sorted(X, y, w, idx, s, e, criterion, min_leaf,
                                    imp, wc0, wc1, keys)
            if g == -np.inf:
                continue
            if _better(g, f, t, best_gain, best_f, best_thr):
                best_gain = g
                best_f = f
                best_thr = t
        if best_f < 0 or best_gain <= GAIN_TOL:
            continue

        # partition idx[s:e] so rows with x <= thr come first
        i = s
        k = e - 1
        while i <= k:
            if X[idx[i], best_f] <= best_thr:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[k]
                idx[k] = tmp
                k -= 1
        mid = i
        feature[node] = best_f
        threshold[node] = best_thr
        ln = offset + n_nodes
        rn = ln + 1
        n_nodes += 2
        left[node] = ln
        right[node] = rn
        # right pushed first so the left subtree is numbered depth-first
        stack_node[sp] = rn
        stack_start[sp] = mid
        stack_end[sp] = e
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = ln
        stack_start[sp] = s
        stack_end[sp] = mid
        stack_depth[sp] = depth + 1
        sp += 1
    return n_nodes


@njit(cache=True)
def _class_weights(y, counts):
    n0 = 0.0
    n1 = 0.0
    for i in range(y.size):
        if y[i] == 0:
            n0 += counts[i]
        else:
            n1 += counts[i]
    tot = n0 + n1
    cw = np.zeros(2)
    if n0 > 0:
        cw[0] = tot / (2.0 * n0)
    if n1 > 0:
        cw[1] = tot / (2.0 * n1)
    return cw


@njit(cache=True)
def fit_forest(X, y, sample_weight, n_estimators, criterion, class_weight,
               bootstrap, max_features, min_split, min_leaf, max_depth, seed):
    """Fit ``n_estimators`` trees; returns the flattened node arrays."""
    ranks, rank_vals, _ = dense_ranks(X)
    return fit_forest_ranked(X, ranks, rank_vals, y, sample_weight,
                             n_estimators, criterion, class_weight, bootstrap,
                             max_features, min_split, min_leaf, max_depth,
                             seed)


@njit(cache=True)
def fit_forest_ranked(X, ranks, rank_vals, y, sample_weight, n_estimators,
                      criterion, class_weight, bootstrap, max_features,
                      min_split, min_leaf, max_depth, seed):
    """``fit_forest`` with ranks precomputed (they may come from a superset
    of the rows in ``X``)."""
    n = X.shape[0]
    cap = n_estimators * (2 * n + 1)
    feature = np.empty(cap, np.int64)
    threshold = np.empty(cap)
    left = np.empty(cap, np.int64)
    right = np.empty(cap, np.int64)
    value = np.zeros((cap, 2))
    n_samples = np.empty(cap, np.int64)
    w_samples = np.empty(cap)
    impurity = np.empty(cap)
    roots = np.empty(n_estimators, np.int64)
    ones = np.ones(n)
    cw_full = _class_weights(y, ones)
    state = np.empty(1, np.uint64)
    offset = 0
    for t in range(n_estimators):
        state[0] = derive_seed(seed, t)
        counts = np.zeros(n)
        if bootstrap:
            for i in range(n):
                counts[_randbelow(state, n)] += 1.0
        else:
            counts[:] = 1.0
        if class_weight == CW_BALANCED:
            cw = cw_full
        elif class_weight == CW_BALANCED_SUBSAMPLE:
            cw = _class_weights(y, counts)
        else:
            cw = np.ones(2)
        w = np.empty(n)
        m = 0
        for i in range(n):
            w[i] = counts[i] * cw[y[i]] * sample_weight[i]
            if counts[i] > 0:
                m += 1
        rows = np.empty(m, np.int64)
        m = 0
        for i in range(n):
            if counts[i] > 0:
                rows[m] = i
                m += 1
        roots[t] = offset
        offset += _grow(X, ranks, rank_vals, y, w, rows, max_features,
                        criterion, min_split, min_leaf, max_depth, state,
                        feature, threshold, left, right, value, n_samples,
                        w_samples, impurity, offset)
    return (feature[:offset].copy(), threshold[:offset].copy(),
            left[:offset].copy(), right[:offset].copy(),
            value[:offset].copy(), n_samples[:offset].copy(),
            w_samples[:offset].copy(), impurity[:offset].copy(), roots)


@njit(cache=True)
def forest_proba1(X, feature, threshold, left, right, value, roots):
    """Mean leaf probability of class 1 for every row of ``X``."""
    n = X.shape[0]
    out = np.zeros(n)
    T = roots.size
    for i in range(n):
        acc = 0.0
        for t in range(T):
            node = roots[t]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            acc += value[node, 1]
        out[i] = acc / T
    return out


@njit(cache=True)
def _fit_predict(Xtr, ranks, rank_vals, ytr, Xte, n_estimators, criterion,
                 class_weight, max_features, seed):
    ones = np.ones(Xtr.shape[0])
    res = fit_forest_ranked(Xtr, ranks, rank_vals, ytr, ones, n_estimators,
                            criterion, class_weight, True, max_features, 2, 1,
                            -1, seed)
    return forest_proba1(Xte, res[0], res[1], res[2], res[3], res[4], res[8])


@njit(cache=True)
def _project(X, cols):
    out = np.empty((X.shape[0], cols.size))
    for i in range(X.shape[0]):
        for j in range(cols.size):
            out[i, j] = X[i, cols[j]]
    return out


@njit(cache=True)
def evaluate_cell(Xtr, ytr, Xte, yte, folds, n_folds, cols, n_estimators,
                  criterion, class_weight, seed):
    """Cross-validated accuracy on the training part plus test confusion.

    Returns ``(tn, fp, fn, tp, cv_score)``. Every forest in the cell uses the
    same ``seed``; ``folds`` assigns each training row to a fold.
    """
    A = _project(Xtr, cols)
    B = _project(Xte, cols)
    ranks, rank_vals, _ = dense_ranks(A)
    mf = max(1, np.int64(np.sqrt(cols.size)))
    acc_sum = 0.0
    n_used = 0
    for k in range(n_folds):
        n_val = 0
        for i in range(folds.size):
            if folds[i] == k:
                n_val += 1
        if n_val == 0 or n_val == folds.size:
            continue
        fit_rows = np.empty(folds.size - n_val, np.int64)
        val_rows = np.empty(n_val, np.int64)
        a = 0
        b = 0
        for i in range(folds.size):
            if folds[i] == k:
                val_rows[b] = i
                b += 1
            else:
                fit_rows[a] = i
                a += 1
        p1 = _fit_predict(A[fit_rows], ranks[fit_rows], rank_vals,
                          ytr[fit_rows], A[val_rows], n_estimators, criterion,
                          class_weight, mf, seed)
        hit = 0
        for i in range(n_val):
            pred = 1 if p1[i] > 0.5 else 0
            if pred == ytr[val_rows[i]]:
                hit += 1
        acc_sum += hit / n_val
        n_used += 1
    cv = acc_sum / n_used if n_used > 0 else np.nan
    p1 = _fit_predict(A, ranks, rank_vals, ytr, B, n_estimators, criterion,
                      class_weight, mf, seed)
    tn = 0
    fp = 0
    fn = 0
    tp = 0
    for i in range(yte.size):
        pred = 1 if p1[i] > 0.5 else 0
        if yte[i] == 1:
            if pred == 1:
                tp += 1
            else:
                fn += 1
        else:
            if pred == 1:
                fp += 1
            else:
                tn += 1
    return tn, fp, fn, tp, cv
