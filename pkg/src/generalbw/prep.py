"""Training-set preparation: correlation-based feature selection and SMOTE."""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .data import CLASSIFICATION, ProjectTable
from .errors import (
    ConstantLabel,
    MinorityTooSmall,
    SingleClass,
    TooFewRows,
    ValidationError,
    ZeroCorrelation,
)

MERIT_EPS = 1e-12


@dataclass(frozen=True)
class FeatureSubset:
    selected: tuple
    merit: float


def abs_correlations(X, y):
    """|Pearson r| feature-vs-target vector and feature-vs-feature matrix.

    Zero-variance columns correlate 0 with everything (including themselves).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    xn = np.sqrt((Xc * Xc).sum(axis=0))
    yn = float(np.sqrt(yc @ yc))
    ok = xn > 0
    safe = np.where(ok, xn, 1.0)
    r_cf = np.zeros(X.shape[1])
    if yn > 0:
        r_cf = np.where(ok, np.abs(Xc.T @ yc) / (safe * yn), 0.0)
    r_ff = np.abs(Xc.T @ Xc) / np.outer(safe, safe)
    r_ff[~ok, :] = 0.0
    r_ff[:, ~ok] = 0.0
    return np.clip(r_cf, 0.0, 1.0), np.clip(r_ff, 0.0, 1.0)


def merit(subset, r_cf, r_ff) -> float:
    """k * mean(r_cf) / sqrt(k + k(k-1) * mean(r_ff)) for the given feature indices."""
    s = list(subset)
    k = len(s)
    if k == 0:
        return 0.0
    num = float(r_cf[s].sum())
    pair = float(r_ff[np.ix_(s, s)].sum() - np.trace(r_ff[np.ix_(s, s)])) if k > 1 else 0.0
    # pair counts each unordered pair twice, i.e. k(k-1) * mean(r_ff)
    return num / float(np.sqrt(k + pair))


def cfs_select(table: ProjectTable, max_stale: int = 5) -> FeatureSubset:
    """Best-first forward search for the subset of highest CFS merit.

    Nodes are expanded in order of merit (ties: lexicographically smaller
    subset). The search stops after ``max_stale`` consecutive expansions that
    fail to beat the best merit by more than ``MERIT_EPS``.
    """
    X, y = table.rows, table.labels
    n, F = X.shape
    if n < 10:
        raise TooFewRows(f"{table.project_id}: CFS needs at least 10 rows, got {n}")
    if F < 1:
        raise ValidationError("no features to select from")
    if np.ptp(y) == 0:
        raise ConstantLabel(f"{table.project_id}: target is constant")
    r_cf, r_ff = abs_correlations(X, y)
    if not (r_cf > 0).any():
        raise ZeroCorrelation(f"{table.project_id}: no feature correlates with the target")
    if F == 1:
        return FeatureSubset((0,), float(r_cf[0]))

    seen = set()
    heap = []
    for j in range(F):
        s = (j,)
        seen.add(s)
        heapq.heappush(heap, (-merit(s, r_cf, r_ff), s))
    best, best_m = None, -np.inf
    stale = 0
    while heap and stale < max_stale:
        neg_m, s = heapq.heappop(heap)
        m = -neg_m
        if m > best_m + MERIT_EPS:
            best, best_m, stale = s, m, 0
        else:
            stale += 1
        for j in range(F):
            if j in s:
                continue
            t = tuple(sorted(s + (j,)))
            if t in seen:
                continue
            seen.add(t)
            heapq.heappush(heap, (-merit(t, r_cf, r_ff), t))
    return FeatureSubset(best, float(best_m))


def _knn_within(P: np.ndarray, idx: np.ndarray, k: int, chunk: int = 1024) -> np.ndarray:
    """k nearest other rows of P for each row in ``idx`` (ties by row order)."""
    sq = (P * P).sum(axis=1)
    out = np.empty((len(idx), k), dtype=np.int64)
    for start in range(0, len(idx), chunk):
        rows = idx[start:start + chunk]
        d = sq[rows, None] + sq[None, :] - 2.0 * (P[rows] @ P.T)
        d[np.arange(len(rows)), rows] = np.inf
        order = np.argsort(d, axis=1, kind="stable")
        out[start:start + len(rows)] = order[:, :k]
    return out


def smote(table: ProjectTable, k: int = 5, seed: int = 0) -> ProjectTable:
    """Oversample the minority class up to the majority count.

    Synthetic row ``s`` interpolates minority parent ``s mod n_min`` toward
    one of its ``min(k, n_min - 1)`` nearest minority neighbours. Original
    rows come first and are untouched; synthetic rows get ``row_id = -1``.
    """
    if table.schema.task != CLASSIFICATION:
        raise ValidationError("SMOTE applies to classification tables only")
    n_neg, n_pos = table.class_counts()
    if n_neg == 0 or n_pos == 0:
        raise SingleClass(f"{table.project_id}: only one class present")
    if n_neg == n_pos:
        return table
    minority = 1.0 if n_pos < n_neg else 0.0
    n_min, n_maj = min(n_neg, n_pos), max(n_neg, n_pos)
    if n_min < 2:
        raise MinorityTooSmall(f"{table.project_id}: minority class has {n_min} row(s)")
    kk = min(k, n_min - 1)
    mi = np.flatnonzero(table.labels == minority)
    P = table.rows[mi]
    n_new = n_maj - n_min
    parents = np.arange(n_new) % n_min
    used = np.unique(parents)
    nbrs = np.empty((n_min, kk), dtype=np.int64)
    nbrs[used] = _knn_within(P, used, kk)
    rng = np.random.default_rng(seed)
    pick = rng.integers(0, kk, size=n_new)
    gap = rng.random(n_new)
    nb = nbrs[parents, pick]
    new_rows = P[parents] + gap[:, None] * (P[nb] - P[parents])
    effort = None
    if table.effort is not None:
        E = table.effort[mi]
        effort = np.concatenate([table.effort, E[parents] + gap * (E[nb] - E[parents])])
    return ProjectTable(
        table.project_id,
        table.schema,
        np.vstack([table.rows, new_rows]),
        np.concatenate([table.labels, np.full(n_new, minority)]),
        effort,
        np.concatenate([table.row_ids, np.full(n_new, -1, dtype=np.int64)]),
        None if table.origin is None else np.concatenate([table.origin, np.full(n_new, "", dtype=object)]),
    )

