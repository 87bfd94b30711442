"""The repeated-split experiment rig and its reports.

Per repeat: split projects 90:10 into train1/test1, cluster train1, find the
bellwethers, then for every test1 project split its rows 2:1 and score the
treatments on the held-out third:

  self         model trained on the project's own train2 rows
  global       model trained on all train1 rows pooled
  bellwether0  the flat tournament winner over train1
  general_<i>  the level-i bellwether the project is routed to
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .bellwether import (
    BellwetherMap,
    ModelCache,
    apply_index,
    bellwether0,
    budget_for_tree,
    general,
)
from .cluster import ClusterTree, build_tree, load_tree, save_tree
from .data import (
    CLASSIFICATION,
    DEFECT_SCHEMA,
    HEALTH_GOALS,
    ProjectTable,
    concat_tables,
    corpus_project_files,
    ensure_dir,
    load_corpus,
    load_health_corpus,
    load_meta,
    sanity_check,
    split_projects,
    split_rows,
    summarize,
)
from .errors import LeakageError, NoDefects, ValidationError
from .learn import ForestParams
from .metrics import CLASSIFICATION_WEIGHTS, REGRESSION_WEIGHTS, report_value, score_model
from .pipeline import FittedPipeline, PipelineConfig, derive_seed, fit_pipeline
from .stats import RankRow, TreatmentSamples, rank_rows, rank_rows_csv, rank_rows_text

DEFECT, HEALTH = "defect", "health"
BUNDLE_FORMAT = 1


@dataclass(frozen=True)
class RigConfig:
    corpus: str = ""
    task: str = DEFECT
    goal: str = "MC"
    repeats: int = 10
    seed: int = 0
    branching: int = 20
    threshold: float = 0.5
    de_enabled: bool | None = None
    levels: tuple | None = None      # None: every level of each repeat's tree
    out: str = "out"
    n_trees: int = 100
    smote_k: int = 5
    horizon: int = 6
    chronological: bool | None = None  # None: on for health, off for defect
    include_goal: bool = False
    test_fraction: float = 0.1

    def __post_init__(self):
        if self.repeats < 1:
            raise ValidationError("repeats must be >= 1")
        if self.task not in (DEFECT, HEALTH):
            raise ValidationError(f"task must be {DEFECT!r} or {HEALTH!r}, got {self.task!r}")
        if self.task == HEALTH and self.goal not in HEALTH_GOALS:
            raise ValidationError(f"goal {self.goal!r} is not one of {HEALTH_GOALS}")
        if self.levels is not None:
            object.__setattr__(self, "levels", tuple(int(v) for v in self.levels))
            if any(v < 0 for v in self.levels):
                raise ValidationError("levels must be >= 0")

    @property
    def split_in_time(self) -> bool:
        return self.task == HEALTH if self.chronological is None else bool(self.chronological)

    def pipeline(self) -> PipelineConfig:
        task = CLASSIFICATION if self.task == DEFECT else "regression"
        return PipelineConfig(task=task, smote_k=self.smote_k, de_enabled=self.de_enabled,
                              forest=ForestParams(n_trees=self.n_trees))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["levels"] = None if self.levels is None else list(self.levels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RigConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


# --------------------------------------------------------------------------- loading

@dataclass
class Corpus:
    projects: list
    excluded: dict  # project_id -> failed sanity rules


def load_rig_corpus(config: RigConfig) -> Corpus:
    if config.task == DEFECT:
        projects = load_corpus(config.corpus, DEFECT_SCHEMA)
    else:
        projects = load_health_corpus(config.corpus, config.goal, config.horizon, config.include_goal)
    excluded = {}
    meta_path = Path(config.corpus) / "meta.csv"
    if meta_path.exists():
        meta = load_meta(meta_path)
        for p in projects:
            if p.project_id in meta:
                res = sanity_check(meta[p.project_id])
                if not res.passed:
                    excluded[p.project_id] = res.failed
        projects = [p for p in projects if p.project_id not in excluded]
    return Corpus(projects, excluded)


# --------------------------------------------------------------------------- leakage

class LeakageGuard:
    """Raises as soon as a held-out row shows up in a training table."""

    def __init__(self):
        self.forbidden: set = set()
        self.checks = 0

    def hold_out(self, table: ProjectTable) -> None:
        if (table.row_ids < 0).any():
            raise LeakageError(f"{table.project_id}: test rows include synthetic rows")
        self.forbidden |= table.row_keys()

    def __call__(self, table: ProjectTable) -> None:
        self.checks += 1
        hit = self.forbidden & table.row_keys()
        if hit:
            raise LeakageError(f"{len(hit)} held-out rows reached training, e.g. {sorted(hit)[:3]}")


# --------------------------------------------------------------------------- results

@dataclass(frozen=True)
class ResultRow:
    repeat: int
    project: str
    treatment: str
    criterion: str
    value: float | None
    status: str = "ok"


RESULT_COLUMNS = ("repeat", "project", "treatment", "criterion", "value", "status")


def criteria_for(task: str) -> tuple:
    from .metrics import CLASSIFICATION_GOALS, REGRESSION_GOALS
    return CLASSIFICATION_GOALS if task == DEFECT else REGRESSION_GOALS


def minimized(task: str) -> dict:
    names = criteria_for(task)
    weights = CLASSIFICATION_WEIGHTS if task == DEFECT else REGRESSION_WEIGHTS
    return {n: w < 0 for n, w in zip(names, weights)}


def _fmt(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def results_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in rows:
        w.writerow([r.repeat, r.project, r.treatment, r.criterion, _fmt(r.value), r.status])
    return buf.getvalue()


def read_results(path) -> list[ResultRow]:
    if not Path(path).is_file():
        raise ValidationError(f"{path}: results file not found")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in RESULT_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValidationError(f"{path}: missing column(s) {missing}")
        out = []
        for i, r in enumerate(reader):
            try:
                value = float(r["value"]) if r["value"] != "" else None
                out.append(ResultRow(int(r["repeat"]), r["project"], r["treatment"],
                                     r["criterion"], value, r["status"]))
            except ValueError:
                raise ValidationError(f"{path}: row {i}: malformed value") from None
    return out


def rank_results(rows: Sequence[ResultRow], task: str, seed: int = 0) -> list[RankRow]:
    """Scott-Knott per criterion over the successful cells of each treatment."""
    mins = minimized(task)
    out = []
    for crit in criteria_for(task):
        by_t: dict = {}
        for r in rows:
            if r.criterion == crit and r.status == "ok":
                by_t.setdefault(r.treatment, []).append(r.value)
        treatments = [TreatmentSamples(t, v) for t, v in sorted(by_t.items()) if len(v) >= 2]
        if treatments:
            out.extend(rank_rows(crit, treatments, mins[crit], derive_seed(seed, "rank", crit)))
    return out


# --------------------------------------------------------------------------- importance

@dataclass(frozen=True)
class ImportanceRow:
    feature: str
    x: float
    y: float
    important: bool

    @property
    def cell(self) -> str:
        return f"{self.x:.2f}/{self.y:.2f}"


def importance_report(bellwether_model: FittedPipeline,
                      self_models: Sequence[FittedPipeline]) -> list[ImportanceRow]:
    """x = bellwether importance, y = median importance over per-project models.

    A feature is flagged when its x exceeds the mean of the nonzero x values.
    """
    if not self_models:
        raise ValidationError("importance report needs at least one per-project model")
    x = bellwether_model.feature_importance()
    names = list(x)
    ys = np.array([[m.feature_importance()[f] for f in names] for m in self_models])
    y = np.median(ys, axis=0)
    xv = np.array([x[f] for f in names])
    nz = xv[xv > 0]
    cut = nz.mean() if nz.size else np.inf
    return [ImportanceRow(f, float(a), float(b), bool(a > cut)) for f, a, b in zip(names, xv, y)]


def importance_csv(rows: Sequence[ImportanceRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("feature", "x", "y", "cell", "globally_important"))
    for r in rows:
        w.writerow([r.feature, repr(r.x), repr(r.y), r.cell, int(r.important)])
    return buf.getvalue()


# --------------------------------------------------------------------------- bundles

def write_bundle(path, tree: ClusterTree, bmap: BellwetherMap, config: RigConfig,
                 seed: int, repeat: int) -> Path:
    root = ensure_dir(path)
    ensure_dir(root / "models")
    save_tree(tree, root / "tree.json")
    models = {}
    for pid, model in sorted(bmap.models.items()):
        rel = f"models/{pid}.json"
        with open(root / rel, "w", encoding="utf-8") as fh:
            json.dump(model.to_dict(), fh, sort_keys=True)
        models[pid] = rel
    manifest = {
        "format_version": BUNDLE_FORMAT,
        "task": config.task,
        "goal": config.goal if config.task == HEALTH else None,
        "tree": "tree.json",
        "depth": tree.depth,
        "seed": seed,
        "repeat": repeat,
        "config": config.to_dict(),
        "config_hash": config.digest(),
        "models": models,
        **bmap.to_manifest(),
    }
    with open(root / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return root


@dataclass
class Bundle:
    tree: ClusterTree
    bmap: BellwetherMap
    manifest: dict


def load_bundle(path) -> Bundle:
    root = Path(path)
    try:
        with open(root / "manifest.json", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"{root}: not a bundle (manifest.json missing)") from None
    if manifest.get("format_version") != BUNDLE_FORMAT:
        raise ValidationError(f"{root}: unsupported bundle format {manifest.get('format_version')!r}")
    tree = load_tree(root / manifest["tree"])
    models = {}
    for pid, rel in manifest["models"].items():
        with open(root / rel, encoding="utf-8") as fh:
            models[pid] = FittedPipeline.from_dict(json.load(fh))
    return Bundle(tree, BellwetherMap.from_manifest(manifest, models), manifest)


# --------------------------------------------------------------------------- the rig

@dataclass
class RigReport:
    config: RigConfig
    results: list = field(default_factory=list)
    budgets: list = field(default_factory=list)   # dicts, one per (repeat, treatment)
    timings: list = field(default_factory=list)   # (repeat, treatment, seconds)
    ranks: list = field(default_factory=list)
    importance: list = field(default_factory=list)
    excluded: dict = field(default_factory=dict)
    leakage_checks: int = 0
    depths: list = field(default_factory=list)

    def treatments(self) -> list:
        return sorted({r.treatment for r in self.results})


BUDGET_COLUMNS = ("repeat", "treatment", "N", "m", "leaf_comparisons", "promotion_comparisons",
                  "budget", "counted", "flat")


def budget_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, BUDGET_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _score_rows(repeat, pid, treatment, model, test2, crits) -> list[ResultRow]:
    try:
        gv = score_model(model, test2).as_dict()
    except NoDefects as exc:
        return [ResultRow(repeat, pid, treatment, c, None, f"failed: {exc}") for c in crits]
    return [ResultRow(repeat, pid, treatment, c, report_value(c, gv[c])) for c in crits]


def _failed(repeat, pid, treatment, crits, reason) -> list[ResultRow]:
    return [ResultRow(repeat, pid, treatment, c, None, f"failed: {reason}") for c in crits]


def run_rig(config: RigConfig, projects: Sequence[ProjectTable] | None = None,
            write: bool = True) -> RigReport:
    """Run every repeat; with ``write`` the reports go to ``config.out``.

    results.csv is rewritten after each repeat so an interrupted run keeps
    what it finished.
    """
    if projects is None:
        corpus = load_rig_corpus(config)
        projects, excluded = corpus.projects, corpus.excluded
    else:
        projects, excluded = list(projects), {}
    pcfg = config.pipeline()
    crits = criteria_for(config.task)
    report = RigReport(config, excluded=excluded)
    out = ensure_dir(config.out) if write else None
    guard = LeakageGuard()
    bundle_parts = None

    for r in range(config.repeats):
        seed_r = derive_seed(config.seed, "repeat", r)
        train1, test1 = split_projects(projects, seed_r, config.test_fraction)
        by_id = {p.project_id: p for p in train1}

        guard.forbidden = set()
        splits = {}
        for p in test1:
            train2, test2 = split_rows(p, derive_seed(seed_r, "rows", p.project_id), config.split_in_time)
            guard.hold_out(test2)
            splits[p.project_id] = (train2, test2)

        t0 = time.perf_counter()
        tree = build_tree([summarize(p) for p in train1], config.branching, config.threshold)
        cache = ModelCache(pcfg, seed_r, guard)
        bmap = general(tree, by_id, pcfg, seed_r, cache)
        t_general = time.perf_counter() - t0
        t0 = time.perf_counter()
        b0 = bellwether0(train1, pcfg, seed_r, cache)
        t_b0 = time.perf_counter() - t0
        t0 = time.perf_counter()
        pooled = concat_tables(train1, "global")
        global_model = fit_pipeline(pooled, pcfg, derive_seed(seed_r, "global"), on_train=guard)
        t_global = time.perf_counter() - t0
        report.depths.append(tree.depth)

        budget = budget_for_tree(tree)
        n = len(train1)
        report.budgets.append({"repeat": r, "treatment": "general", "N": n, "m": budget.m,
                               "leaf_comparisons": budget.leaf_comparisons,
                               "promotion_comparisons": budget.promotion_comparisons,
                               "budget": budget.total, "counted": bmap.total_comparisons,
                               "flat": budget.flat})
        report.budgets.append({"repeat": r, "treatment": "bellwether0", "N": n, "m": 1,
                               "leaf_comparisons": n * (n - 1), "promotion_comparisons": 0,
                               "budget": n * (n - 1), "counted": b0.comparisons_made,
                               "flat": n * (n - 1)})

        levels = config.levels if config.levels is not None else tuple(range(tree.depth + 1))
        t_self = 0.0
        for p in test1:
            pid = p.project_id
            train2, test2 = splits[pid]
            rows = []
            t0 = time.perf_counter()
            try:
                own = fit_pipeline(train2, pcfg, derive_seed(seed_r, "self", pid), on_train=guard)
                rows += _score_rows(r, pid, "self", own, test2, crits)
            except ValidationError as exc:
                rows += _failed(r, pid, "self", crits, exc)
            t_self += time.perf_counter() - t0
            rows += _score_rows(r, pid, "global", global_model, test2, crits)
            rows += _score_rows(r, pid, "bellwether0", cache.get(by_id[b0.winner]), test2, crits)
            for lv in levels:
                name = f"general_{lv}"
                if lv > tree.depth:
                    rows += _failed(r, pid, name, crits, f"tree depth is {tree.depth}")
                    continue
                # routing only looks at the project's training rows
                idx = apply_index(tree, bmap, lv, train2)
                rows += _score_rows(r, pid, name, idx.model, test2, crits)
            report.results.extend(rows)

        report.timings += [(r, "general", t_general), (r, "bellwether0", t_b0),
                           (r, "global", t_global), (r, "self", t_self)]
        if r == 0:
            bundle_parts = (tree, bmap, seed_r, cache, train1)
        if out is not None:
            (out / "results.csv").write_text(results_csv(report.results), encoding="utf-8")

    report.leakage_checks = guard.checks
    report.ranks = rank_results(report.results, config.task, config.seed)
    tree, bmap, seed_r, cache, train1 = bundle_parts
    root_model = bmap.model(0, ())
    self_models = [m for m in (cache.get(p) for p in train1) if not isinstance(m, Exception)]
    report.importance = importance_report(root_model, self_models)
    if out is not None:
        (out / "ranks.csv").write_text(rank_rows_csv(report.ranks), encoding="utf-8")
        (out / "ranks.txt").write_text(rank_rows_text(report.ranks), encoding="utf-8")
        (out / "budget.csv").write_text(budget_csv(report.budgets), encoding="utf-8")
        (out / "importance.csv").write_text(importance_csv(report.importance), encoding="utf-8")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("repeat", "treatment", "seconds"))
        w.writerows((a, b, f"{c:.6f}") for a, b, c in report.timings)
        (out / "timing.csv").write_text(buf.getvalue(), encoding="utf-8")
        write_bundle(out / "bundle", tree, bmap, config, seed_r, 0)
    return report


# --------------------------------------------------------------------------- sweeps

SWEEP_COLUMNS = ("N", "m", "depth", "general_counted", "general_budget", "bellwether0",
                 "ratio", "seconds")


def comparison_sweep(corpora: dict, config: PipelineConfig, seed: int = 0,
                     branching: int = 20, threshold: float = 0.5) -> list[dict]:
    """Count GENERAL's model evaluations on each corpus (N -> project list).

    ``seconds`` is wall time and the only non-deterministic column.
    """
    out = []
    for N, tables in sorted(corpora.items()):
        t0 = time.perf_counter()
        tree = build_tree([summarize(t) for t in tables], branching, threshold)
        bmap = general(tree, {t.project_id: t for t in tables}, config, seed)
        b = budget_for_tree(tree)
        out.append({"N": len(tables), "m": b.m, "depth": tree.depth,
                    "general_counted": bmap.total_comparisons, "general_budget": b.total,
                    "bellwether0": b.flat, "ratio": bmap.total_comparisons / max(b.flat, 1),
                    "seconds": time.perf_counter() - t0})
    return out


def sweep_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**r, "ratio": f"{r['ratio']:.6f}", "seconds": f"{r['seconds']:.3f}"})
    return buf.getvalue()


def corpus_size(path) -> int:
    return len(corpus_project_files(path))
