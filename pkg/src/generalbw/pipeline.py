"""The modelling stack trained on one source table.

Classification: CFS -> SMOTE -> random forest (DE tuning optional).
Regression: CFS -> DE-tuned decision-tree regressor.
"""
from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .data import CLASSIFICATION, REGRESSION, FeatureSchema, ProjectTable, split_rows
from .errors import ValidationError
from .learn import (
    Bound,
    ForestParams,
    TreeParams,
    de_tune,
    fit_forest,
    fit_regressor,
    model_from_dict,
)
from .metrics import confusion_metrics, effort_metrics, mre
from .prep import cfs_select, smote

REGRESSOR_SPACE = {
    "max_depth": Bound(1, 12, True),
    "min_samples_split": Bound(2, 20, True),
    "min_samples_leaf": Bound(1, 12, True),
}
FOREST_SPACE = {
    "max_depth": Bound(1, 12, True),
    "min_samples_split": Bound(2, 20, True),
    "min_samples_leaf": Bound(1, 12, True),
    "max_features": Bound(0.1, 1.0),
}


@dataclass(frozen=True)
class DESettings:
    population: int = 20
    generations: int = 10
    F: float = 0.75
    CR: float = 0.3


@dataclass(frozen=True)
class PipelineConfig:
    task: str = CLASSIFICATION
    use_cfs: bool = True
    use_smote: bool = True
    smote_k: int = 5
    forest: ForestParams = field(default_factory=ForestParams)
    regressor: TreeParams = field(default_factory=TreeParams)
    de_enabled: bool | None = None  # None: on for regression, off for classification
    de: DESettings = field(default_factory=DESettings)

    @property
    def tune(self) -> bool:
        return self.task == REGRESSION if self.de_enabled is None else bool(self.de_enabled)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        if "forest" in d:
            d["forest"] = ForestParams(**d["forest"])
        if "regressor" in d:
            d["regressor"] = TreeParams(**d["regressor"])
        if "de" in d:
            d["de"] = DESettings(**d["de"])
        return cls(**d)


def derive_seed(seed: int, *parts) -> int:
    """Stable child seed from a root seed and labels (strings hashed with CRC32)."""
    key = [zlib.crc32(str(p).encode("utf-8")) for p in parts]
    ss = np.random.SeedSequence(int(seed) & ((1 << 63) - 1), spawn_key=tuple(key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


@dataclass(frozen=True, eq=False)
class FittedPipeline:
    task: str
    schema: FeatureSchema
    selected: tuple
    learner: object
    steps: tuple
    trained_on: str
    n_train_rows: int
    params: dict = field(default_factory=dict)

    def predict_proba(self, X) -> np.ndarray:
        if self.task != CLASSIFICATION:
            raise ValidationError("predict_proba is only defined for classifiers")
        return self.learner.predict_proba(X)

    def predict_value(self, X) -> np.ndarray:
        if self.task != REGRESSION:
            raise ValidationError("predict_value is only defined for regressors")
        return self.learner.predict_value(X)

    def predict(self, X) -> np.ndarray:
        if self.task == CLASSIFICATION:
            return (self.predict_proba(X) >= 0.5).astype(float)
        return self.predict_value(X)

    def feature_importance(self) -> dict:
        imp = self.learner.feature_importance()
        return dict(zip(self.schema.feature_names, (float(v) for v in imp)))

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "schema": self.schema.to_dict(),
            "selected": list(self.selected),
            "steps": list(self.steps),
            "trained_on": self.trained_on,
            "n_train_rows": self.n_train_rows,
            "params": self.params,
            "learner": self.learner.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedPipeline":
        return cls(
            d["task"], FeatureSchema.from_dict(d["schema"]), tuple(d["selected"]),
            model_from_dict(d["learner"]), tuple(d["steps"]), d["trained_on"],
            d["n_train_rows"], d.get("params", {}),
        )


def _forest_fitness(train: ProjectTable, val: ProjectTable, cfg: PipelineConfig, seed: int):
    def objective(p: dict) -> float:
        fp = replace(cfg.forest, max_depth=p["max_depth"], min_samples_split=p["min_samples_split"],
                     min_samples_leaf=p["min_samples_leaf"], max_features=p["max_features"])
        model = fit_forest(train.rows, train.labels, fp, seed=seed)
        proba = model.predict_proba(val.rows)
        recall, precision, false_alarm = confusion_metrics(proba >= 0.5, val.labels)
        try:
            popt20 = effort_metrics(proba, val.effort, val.labels)[0]
        except ValidationError:
            popt20 = 0.0
        # all four terms are rates in [0, 1]; lower is better
        return ((1 - recall) + false_alarm + (1 - precision) + (1 - popt20)) / 4.0

    return objective


def _regressor_fitness(train: ProjectTable, val: ProjectTable, seed: int):
    def objective(p: dict) -> float:
        tp = TreeParams(p["max_depth"], p["min_samples_split"], p["min_samples_leaf"])
        model = fit_regressor(train.rows, train.labels, tp, seed=seed)
        return float(np.median(mre(model.predict_value(val.rows), val.labels)))

    return objective


def fit_pipeline(table: ProjectTable, config: PipelineConfig, seed: int = 0,
                 on_train: Callable[[ProjectTable], None] | None = None) -> FittedPipeline:
    """Train the modelling stack on ``table``.

    ``on_train`` sees the input table and every table that reaches a learner
    (after resampling); the experiment rig hooks its leakage check in here.
    """
    if table.schema.task != config.task:
        raise ValidationError(f"table task {table.schema.task!r} != pipeline task {config.task!r}")
    if on_train is not None:
        on_train(table)
    steps = []
    if config.use_cfs:
        selected = cfs_select(table).selected
        steps.append("cfs")
    else:
        selected = tuple(range(table.schema.n_features))
    work = table.select_features(selected)
    params: dict = {}

    if config.task == CLASSIFICATION:
        fp = config.forest
        if config.tune:
            # validation rows stay real: resample the tuning half only
            tr, va = split_rows(work, derive_seed(seed, "de-split"))
            if config.use_smote:
                tr = smote(tr, k=config.smote_k, seed=derive_seed(seed, "de-smote"))
            res = de_tune(_forest_fitness(tr, va, config, derive_seed(seed, "de-fit")), FOREST_SPACE,
                          config.de.population, config.de.generations, config.de.F, config.de.CR,
                          seed=derive_seed(seed, "de"))
            fp = replace(fp, **res.params)
            params = {"de": res.params, "de_score": res.score}
        if config.use_smote:
            work = smote(work, k=config.smote_k, seed=derive_seed(seed, "smote"))
            steps.append("smote")
        if config.tune:
            steps.append("de")
        if on_train is not None:
            on_train(work)
        learner = fit_forest(work.rows, work.labels, fp, seed=derive_seed(seed, "forest"))
        learner = _rebase(learner, work, selected, table.schema.n_features)
        steps.append("forest")
        params.setdefault("forest", asdict(fp))
    else:
        tp = config.regressor
        if config.tune:
            tr, va = split_rows(work, derive_seed(seed, "de-split"))
            res = de_tune(_regressor_fitness(tr, va, derive_seed(seed, "de-fit")), REGRESSOR_SPACE,
                          config.de.population, config.de.generations, config.de.F, config.de.CR,
                          seed=derive_seed(seed, "de"))
            tp = TreeParams(res.params["max_depth"], res.params["min_samples_split"],
                            res.params["min_samples_leaf"])
            params = {"de": res.params, "de_score": res.score}
            steps.append("de")
        if on_train is not None:
            on_train(work)
        learner = fit_regressor(work.rows, work.labels, tp, seed=derive_seed(seed, "tree"))
        learner = _rebase(learner, work, selected, table.schema.n_features)
        steps.append("regressor")
    return FittedPipeline(config.task, table.schema, tuple(selected), learner, tuple(steps),
                          table.project_id, table.n_rows, params)


def _rebase(learner, work, selected, n_schema):
    """Re-express a learner fitted on narrowed rows against the full schema."""
    return type(learner)(learner.trees, tuple(selected), n_schema,
                         *([learner.params] if hasattr(learner, "params") else []))
