"""Random forest classifier and tree regressor wrappers over a feature subset.

Both models accept rows in full-schema column order and project them onto
the features chosen by CFS before reaching the trees.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..errors import DimensionMismatch, UnfittedModel, ValidationError
from . import _kernels
from .tree import GINI_CLASSIFY, VARIANCE_REGRESS, DecisionTree, TreeParams, fit_tree


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: object = "sqrt"
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValidationError("a forest needs at least one tree")

    def tree_params(self) -> TreeParams:
        return TreeParams(self.max_depth, self.min_samples_split, self.min_samples_leaf, self.max_features)


class _SubsetModel:
    trees: tuple
    selected: tuple
    n_schema_features: int

    def _project(self, X) -> np.ndarray:
        if not self.trees:
            raise UnfittedModel("model has no trees")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_schema_features:
            raise DimensionMismatch(
                f"model expects {self.n_schema_features} schema features, got {X.shape[1]}"
            )
        return X[:, list(self.selected)]

    def tree_outputs(self, X) -> np.ndarray:
        """One row of predictions per tree."""
        Z = self._project(X)
        return np.vstack([t.predict(Z) for t in self.trees])

    @cached_property
    def _packed(self):
        feats, thr, left, right, val, roots = [], [], [], [], [], []
        offset = 0
        for t in self.trees:
            roots.append(offset)
            feats.append(t.feature)
            thr.append(t.threshold)
            left.append(np.where(t.left >= 0, t.left + offset, -1))
            right.append(np.where(t.right >= 0, t.right + offset, -1))
            val.append(t.value)
            offset += t.node_count
        cat = np.concatenate
        return (
            np.ascontiguousarray(cat(feats), dtype=np.int64),
            np.ascontiguousarray(cat(thr), dtype=float),
            np.ascontiguousarray(cat(left), dtype=np.int64),
            np.ascontiguousarray(cat(right), dtype=np.int64),
            np.ascontiguousarray(cat(val), dtype=float),
            np.array(roots, dtype=np.int64),
        )

    def _mean_output(self, X) -> np.ndarray:
        Z = np.ascontiguousarray(self._project(X))
        return _kernels.predict_packed(*self._packed, Z)

    def feature_importance(self) -> np.ndarray:
        """Mean impurity-decrease importance over trees, normalized over the full schema.

        Features outside the selected subset get 0; all zeros when no tree split.
        """
        if not self.trees:
            raise UnfittedModel("model has no trees")
        raw = np.mean([t.raw_importance() for t in self.trees], axis=0)
        out = np.zeros(self.n_schema_features)
        out[list(self.selected)] = raw
        s = out.sum()
        return out / s if s > 0 else out

    def to_dict(self) -> dict:
        return {
            "kind": type(self).__name__,
            "selected": list(self.selected),
            "n_schema_features": self.n_schema_features,
            "trees": [t.to_dict() for t in self.trees],
        }


@dataclass(frozen=True, eq=False)
class ForestModel(_SubsetModel):
    trees: tuple
    selected: tuple
    n_schema_features: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict_proba(self, X) -> np.ndarray:
        """Mean positive-class leaf probability over trees, one value per row."""
        return self._mean_output(X)

    def predict(self, X, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(X) >= threshold).astype(float)


@dataclass(frozen=True, eq=False)
class RegressorModel(_SubsetModel):
    trees: tuple
    selected: tuple
    n_schema_features: int
    params: dict | None = None

    def predict_value(self, X) -> np.ndarray:
        return self._mean_output(X)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["params"] = self.params
        return d


def model_from_dict(d: dict):
    trees = tuple(DecisionTree.from_dict(t) for t in d["trees"])
    if d["kind"] == "ForestModel":
        return ForestModel(trees, tuple(d["selected"]), d["n_schema_features"])
    if d["kind"] == "RegressorModel":
        return RegressorModel(trees, tuple(d["selected"]), d["n_schema_features"], d.get("params"))
    raise ValidationError(f"unknown model kind {d['kind']!r}")


def fit_forest(X, y, params: ForestParams | None = None, seed=0,
               selected=None, n_schema_features: int | None = None) -> ForestModel:
    """Bagged Gini trees; each tree draws its own bootstrap and split features.

    Per-tree generators are spawned from ``seed`` so the result does not depend
    on the order trees are grown in.
    """
    params = params or ForestParams()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    F = X.shape[1] if n_schema_features is None else n_schema_features
    sel = tuple(range(X.shape[1])) if selected is None else tuple(selected)
    Z = X[:, list(sel)] if selected is not None else X
    n = Z.shape[0]
    tp = params.tree_params()
    trees = []
    for child in np.random.SeedSequence(_entropy(seed)).spawn(params.n_trees):
        rng = np.random.default_rng(child)
        if params.bootstrap:
            b = rng.integers(0, n, size=n)
            trees.append(fit_tree(Z[b], y[b], tp, mode=GINI_CLASSIFY, rng=rng))
        else:
            trees.append(fit_tree(Z, y, tp, mode=GINI_CLASSIFY, rng=rng))
    return ForestModel(tuple(trees), sel, F)


def fit_regressor(X, y, params: TreeParams | None = None, seed=0,
                  selected=None, n_schema_features: int | None = None) -> RegressorModel:
    X = np.asarray(X, dtype=float)
    F = X.shape[1] if n_schema_features is None else n_schema_features
    sel = tuple(range(X.shape[1])) if selected is None else tuple(selected)
    Z = X[:, list(sel)] if selected is not None else X
    params = params or TreeParams()
    tree = fit_tree(Z, y, params, seed=seed, mode=VARIANCE_REGRESS)
    return RegressorModel((tree,), sel, F, {
        "max_depth": params.max_depth,
        "min_samples_split": params.min_samples_split,
        "min_samples_leaf": params.min_samples_leaf,
    })


def _entropy(seed) -> int:
    if isinstance(seed, (int, np.integer)):
        return int(seed) & ((1 << 63) - 1)
    raise ValidationError(f"seed must be an integer, got {seed!r}")
