# cython: language_level=3
"""Compiled best-split search; mirrors ``_split_py.best_split`` bit for bit."""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free, qsort

cnp.import_array()

ctypedef struct Pair:
    double v
    Py_ssize_t i


cdef int _cmp(const void* a, const void* b) noexcept nogil:
    cdef Pair* p = <Pair*>a
    cdef Pair* q = <Pair*>b
    if p.v < q.v:
        return -1
    if p.v > q.v:
        return 1
    # equal values keep row order, like a stable argsort
    if p.i < q.i:
        return -1
    if p.i > q.i:
        return 1
    return 0


def best_split(double[:, ::1] X, double[::1] y, long long[::1] features, int mode, Py_ssize_t min_leaf):
    """Return (feature, threshold, score); feature is -1 when no valid split exists."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t m = features.shape[0]
    cdef Py_ssize_t k, i, f
    cdef double best = -1.0
    cdef Py_ssize_t best_f = -1
    cdef double best_thr = 0.0
    cdef double sl, sr, total, nl, nr, a, b, score, mid, x0, x1
    cdef bint have = False
    if n < 2:
        return -1, 0.0, 0.0
    cdef Pair* buf = <Pair*>malloc(n * sizeof(Pair))
    cdef double* cs = <double*>malloc(n * sizeof(double))
    if buf == NULL or cs == NULL:
        free(buf)
        free(cs)
        raise MemoryError()
    try:
        with nogil:
            for k in range(m):
                f = features[k]
                for i in range(n):
                    buf[i].v = X[i, f]
                    buf[i].i = i
                qsort(buf, n, sizeof(Pair), _cmp)
                sl = 0.0
                for i in range(n):
                    sl = sl + y[buf[i].i]
                    cs[i] = sl
                total = cs[n - 1]
                for i in range(n - 1):
                    x0 = buf[i].v
                    x1 = buf[i + 1].v
                    if not (x0 < x1):
                        continue
                    nl = <double>(i + 1)
                    nr = <double>(n - i - 1)
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    sl = cs[i]
                    sr = total - sl
                    if mode == 0:
                        a = nl - sl
                        b = nr - sr
                        score = (a * a + sl * sl) / nl + (b * b + sr * sr) / nr
                    else:
                        score = sl * sl / nl + sr * sr / nr
                    if (not have) or score > best:
                        have = True
                        best = score
                        best_f = f
                        mid = x0 + (x1 - x0) * 0.5
                        if mid >= x1:
                            mid = x0
                        best_thr = mid
    finally:
        free(buf)
        free(cs)
    if not have:
        return -1, 0.0, 0.0
    return int(best_f), float(best_thr), float(best)


def predict_packed(long long[::1] feature, double[::1] threshold, long long[::1] left,
                   long long[::1] right, double[::1] value, long long[::1] roots,
                   double[:, ::1] X):
    """Mean leaf value over trees packed into shared node arrays (absolute child ids)."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t T = roots.shape[0]
    cdef Py_ssize_t r, t
    cdef long long node
    cdef double acc
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for r in range(n):
            acc = 0.0
            for t in range(T):
                node = roots[t]
                while feature[node] >= 0:
                    if X[r, feature[node]] <= threshold[node]:
                        node = left[node]
                    else:
                        node = right[node]
                acc = acc + value[node]
            o[r] = acc / T
    return out
