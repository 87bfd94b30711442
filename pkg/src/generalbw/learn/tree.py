"""CART trees stored as flat arrays (preorder node numbering)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, EmptyTable, ValidationError
from . import _kernels

GINI_CLASSIFY = "gini-classify"
VARIANCE_REGRESS = "variance-regress"
_MODE_CODE = {GINI_CLASSIFY: _kernels.GINI, VARIANCE_REGRESS: _kernels.VARIANCE}

LEAF = -1


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    # None = all features; "sqrt" = ceil(sqrt(F)); float in (0, 1] = ceil(frac * F)
    max_features: object = None

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 0:
            raise ValidationError("max_depth must be >= 0")
        if self.min_samples_split < 2:
            raise ValidationError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ValidationError("min_samples_leaf must be >= 1")

    def n_split_features(self, F: int) -> int:
        mf = self.max_features
        if mf is None:
            return F
        if mf == "sqrt":
            return max(1, int(np.ceil(np.sqrt(F))))
        if isinstance(mf, int) and not isinstance(mf, bool):
            return max(1, min(F, mf))
        frac = float(mf)
        if not 0 < frac <= 1:
            raise ValidationError(f"max_features fraction {frac} outside (0, 1]")
        return max(1, min(F, int(np.ceil(frac * F))))


@dataclass(eq=False)
class DecisionTree:
    mode: str
    n_features: int
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray      # positive-class probability or mean target
    n_samples: np.ndarray
    impurity: np.ndarray

    @property
    def node_count(self) -> int:
        return self.feature.shape[0]

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature == LEAF

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"tree expects {self.n_features} features, got {X.shape[1]}")
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def raw_importance(self) -> np.ndarray:
        """Per-feature sum of weighted impurity decrease, as a fraction of root samples."""
        out = np.zeros(self.n_features)
        total = float(self.n_samples[0])
        for i in np.flatnonzero(self.feature != LEAF):
            l, r = self.left[i], self.right[i]
            dec = (self.n_samples[i] * self.impurity[i]
                   - self.n_samples[l] * self.impurity[l]
                   - self.n_samples[r] * self.impurity[r])
            out[self.feature[i]] += max(dec, 0.0) / total
        return out

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n_features": self.n_features,
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
            "impurity": self.impurity.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(
            d["mode"], d["n_features"],
            np.array(d["feature"], dtype=np.int64),
            np.array(d["threshold"], dtype=float),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array(d["value"], dtype=float),
            np.array(d["n_samples"], dtype=np.int64),
            np.array(d["impurity"], dtype=float),
        )


def _impurity(y: np.ndarray, mode: str) -> float:
    if mode == GINI_CLASSIFY:
        p = float(y.mean())
        return 1.0 - p * p - (1.0 - p) * (1.0 - p)
    d = y - y.mean()
    return float(d @ d) / y.shape[0]


def fit_tree(X, y, params: TreeParams | None = None, seed=0, mode: str = GINI_CLASSIFY,
             rng: np.random.Generator | None = None) -> DecisionTree:
    """Greedy CART fit.

    Gini impurity for ``gini-classify`` (labels 0/1), variance for
    ``variance-regress``. Candidate thresholds are midpoints between adjacent
    distinct values; rows with ``x <= threshold`` go left. Gain ties resolve
    to the lower feature index, then the lower threshold.
    """
    if mode not in _MODE_CODE:
        raise ValidationError(f"unknown tree mode {mode!r}")
    params = params or TreeParams()
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyTable("cannot fit a tree on an empty table")
    if y.shape != (X.shape[0],):
        raise DimensionMismatch("label vector length differs from row count")
    if rng is None:
        rng = np.random.default_rng(seed)
    n, F = X.shape
    k = params.n_split_features(F)
    code = _MODE_CODE[mode]
    all_feats = np.arange(F, dtype=np.int64)

    feature, threshold, left, right, value, n_samples, impurity = [], [], [], [], [], [], []

    def new_node(idx):
        yy = y[idx]
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(yy.mean()))
        n_samples.append(len(idx))
        impurity.append(_impurity(yy, mode))
        return len(feature) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        m = len(idx)
        yy = y[idx]
        if (yy.min() == yy.max()
                or (params.max_depth is not None and depth >= params.max_depth)
                or m < params.min_samples_split
                or m < 2 * params.min_samples_leaf):
            continue
        Xn = np.ascontiguousarray(X[idx])
        yn = np.ascontiguousarray(y[idx])
        if k < F:
            feats = np.sort(rng.choice(F, size=k, replace=False)).astype(np.int64)
        else:
            feats = all_feats
        f, thr, _ = _kernels.best_split(Xn, yn, feats, code, params.min_samples_leaf)
        if f < 0 and k < F:
            # sampled features were all constant here; fall back to the rest
            rest = np.setdiff1d(all_feats, feats).astype(np.int64)
            f, thr, _ = _kernels.best_split(Xn, yn, rest, code, params.min_samples_leaf)
        if f < 0:
            continue
        go_left = Xn[:, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node] = f
        threshold[node] = thr
        ln = new_node(li)
        rn = new_node(ri)
        left[node] = ln
        right[node] = rn
        stack.append((rn, ri, depth + 1))
        stack.append((ln, li, depth + 1))

    return DecisionTree(
        mode, F,
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=float),
        np.array(n_samples, dtype=np.int64),
        np.array(impurity, dtype=float),
    )
