"""Independent reference implementations used as test oracles.

Deliberately naive: plain Python loops, no shared code with the package.
"""
import math

GAIN_TIE = 1e-12


def ref_impurity(c0, c1, criterion):
    tot = c0 + c1
    p = [c0 / tot, c1 / tot]
    if criterion == "gini":
        return 1.0 - sum(q * q for q in p)
    return -sum(q * math.log2(q) for q in p if q > 0)


def brute_best_split(X, y, w, criterion, features=None, min_leaf=1):
    """Enumerate every (feature, midpoint) partition and score it directly.

    Returns ``(feature, threshold, gain, left_row_set)`` or None.
    """
    n = len(y)
    d = len(X[0])
    feats = range(d) if features is None else features
    W = sum(w)
    c0 = sum(wi for wi, yi in zip(w, y) if yi == 0)
    parent = ref_impurity(c0, W - c0, criterion)
    best = None
    for f in feats:
        vals = sorted({row[f] for row in X})
        for a, b in zip(vals, vals[1:]):
            t = (a + b) / 2
            if t >= b:
                t = a
            left = [i for i in range(n) if X[i][f] <= t]
            right = [i for i in range(n) if X[i][f] > t]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            wl0 = sum(w[i] for i in left if y[i] == 0)
            wl1 = sum(w[i] for i in left if y[i] == 1)
            wr0 = sum(w[i] for i in right if y[i] == 0)
            wr1 = sum(w[i] for i in right if y[i] == 1)
            wl, wr = wl0 + wl1, wr0 + wr1
            gain = parent - (wl * ref_impurity(wl0, wl1, criterion)
                             + wr * ref_impurity(wr0, wr1, criterion)) / W
            if best is None or gain > best[2] + GAIN_TIE or (
                    gain >= best[2] - GAIN_TIE and (f, t) < (best[0], best[1])):
                best = (f, t, gain, frozenset(left))
    if best is None or best[2] <= GAIN_TIE:
        return None
    return best


def ref_tree(X, y, w, criterion, rows=None):
    """Fully grown tree from ``brute_best_split``; nested tuples."""
    if rows is None:
        rows = list(range(len(y)))
    sub_X = [X[i] for i in rows]
    sub_y = [y[i] for i in rows]
    sub_w = [w[i] for i in rows]
    W = sum(sub_w)
    p1 = sum(wi for wi, yi in zip(sub_w, sub_y) if yi == 1) / W
    if len(rows) < 2:
        return ("leaf", p1)
    split = brute_best_split(sub_X, sub_y, sub_w, criterion)
    if split is None:
        return ("leaf", p1)
    f, t, _, left_local = split
    left = [rows[i] for i in sorted(left_local)]
    right = [rows[i] for i in range(len(rows)) if i not in left_local]
    return ("node", f, t, ref_tree(X, y, w, criterion, left),
            ref_tree(X, y, w, criterion, right))


def ref_tree_predict(tree, row):
    while tree[0] == "node":
        _, f, t, lo, hi = tree
        tree = lo if row[f] <= t else hi
    return tree[1]


# twelve directional counts of four reference users, each paired with its
# known activity total
REFERENCE_ACTIVITY_ROWS = [
    ((0, 1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0), 2),
    ((15, 29, 5, 11, 16, 4, 4, 10, 2, 0, 2, 2), 100),
    ((37, 130, 3, 30, 122, 2, 4, 8, 2, 5, 10, 1), 354),
    ((20, 102, 65, 4, 43, 28, 9, 46, 39, 1, 10, 1), 368),
]
