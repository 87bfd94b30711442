"""Pure-numpy best-split search (fallback for the compiled kernel).

Both kernels visit features in the given order and thresholds in ascending
order, keep the first strictly better score, and use the same floating-point
expressions, so they agree exactly.
"""
import numpy as np

GINI = 0
VARIANCE = 1


def best_split(X, y, features, mode, min_leaf):
    """Return (feature, threshold, score); feature is -1 when no valid split exists.

    ``score`` is the split's purity proxy (larger is better): for Gini it is
    sum over children of (n0^2 + n1^2) / n_child, for variance it is
    sum over children of (sum y)^2 / n_child.
    """
    n = X.shape[0]
    if n < 2:
        return -1, 0.0, 0.0
    nl = np.arange(1, n, dtype=float)
    nr = n - nl
    size_ok = (nl >= min_leaf) & (nr >= min_leaf)
    have = False
    best, best_f, best_thr = -1.0, -1, 0.0
    for f in features:
        x = X[:, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        cs = np.cumsum(y[order])
        total = cs[-1]
        sl = cs[:-1]
        sr = total - sl
        if mode == GINI:
            a = nl - sl
            b = nr - sr
            score = (a * a + sl * sl) / nl + (b * b + sr * sr) / nr
        else:
            score = sl * sl / nl + sr * sr / nr
        valid = (xs[:-1] < xs[1:]) & size_ok
        if not valid.any():
            continue
        cand = np.flatnonzero(valid)
        j = cand[int(np.argmax(score[cand]))]
        s = float(score[j])
        if not have or s > best:
            have = True
            best, best_f = s, int(f)
            x0, x1 = float(xs[j]), float(xs[j + 1])
            mid = x0 + (x1 - x0) * 0.5
            best_thr = x0 if mid >= x1 else mid
    if not have:
        return -1, 0.0, 0.0
    return best_f, best_thr, best


def predict_packed(feature, threshold, left, right, value, roots, X):
    """Mean leaf value over trees packed into shared node arrays (absolute child ids).

    Tree outputs are accumulated in tree order, then divided once, matching
    the compiled kernel exactly.
    """
    n = X.shape[0]
    acc = np.zeros(n)
    rows = np.arange(n)
    for root in roots:
        node = np.full(n, root, dtype=np.int64)
        active = rows[feature[node] >= 0]
        while active.size:
            cur = node[active]
            go_left = X[active, feature[cur]] <= threshold[cur]
            node[active] = np.where(go_left, left[cur], right[cur])
            active = active[feature[node[active]] >= 0]
        acc = acc + value[node]
    return acc / len(roots)
