"""Project tables: loading, validation, summarization and splitting.

A corpus is a directory holding one CSV per project (``<project_id>.csv``)
and an optional ``meta.csv`` sidecar used by the repository sanity checks.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyFile,
    EmptyTable,
    MissingColumn,
    NonNumericCell,
    SchemaError,
    SeriesTooShort,
    TooFewProjects,
    TooFewRows,
    UnknownGoal,
    ValidationError,
)

CLASSIFICATION = "classification"
REGRESSION = "regression"

# Change-level process metrics; the 21 names of the feature-importance table.
# ``nddev`` appears only in the metric glossary and is accepted by custom schemas.
DEFECT_FEATURES = (
    "la", "ld", "lt", "age", "ddev", "nuc", "own", "minor", "ndev", "ncomm",
    "adev", "avg_nddev", "avg_nadev", "avg_ncomm", "ns", "exp", "sexp", "rexp",
    "nd", "sctr", "nadev",
)

HEALTH_METRICS = (
    "MC", "MAC", "MOP", "MCP", "MMP", "MPM", "MPC",
    "MOI", "MCI", "MIC", "MS", "MF", "MW",
)
HEALTH_GOALS = ("MC", "MAC", "MOP", "MCP", "MOI", "MCI", "MS")


@dataclass(frozen=True)
class FeatureSchema:
    task: str
    feature_names: tuple
    label_name: str
    effort_name: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.task not in (CLASSIFICATION, REGRESSION):
            raise SchemaError(f"unknown task {self.task!r}")
        if not self.feature_names:
            raise SchemaError("schema has no features")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise SchemaError("feature names are not unique")
        if self.label_name in self.feature_names:
            raise SchemaError(f"label {self.label_name!r} is also a feature")

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "feature_names": list(self.feature_names),
            "label_name": self.label_name,
            "effort_name": self.effort_name,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(d["task"], tuple(d["feature_names"]), d["label_name"], d.get("effort_name"))


DEFECT_SCHEMA = FeatureSchema(CLASSIFICATION, DEFECT_FEATURES, "buggy", "loc")


def health_schema(goal: str, include_goal: bool = False) -> FeatureSchema:
    if goal not in HEALTH_GOALS:
        raise UnknownGoal(f"{goal!r} is not a predictable health metric; choose from {HEALTH_GOALS}")
    feats = HEALTH_METRICS if include_goal else tuple(m for m in HEALTH_METRICS if m != goal)
    return FeatureSchema(REGRESSION, feats, f"{goal}_future")


def _frozen(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ProjectTable:
    """One project's instances. Immutable once built.

    ``row_ids`` are the positions of the rows in the originally loaded table
    (synthetic rows carry -1); the experiment rig uses them to prove that no
    held-out row ever reaches a training routine.
    """

    project_id: str
    schema: FeatureSchema
    rows: np.ndarray
    labels: np.ndarray
    effort: np.ndarray | None = None
    row_ids: np.ndarray | None = field(default=None)
    origin: np.ndarray | None = field(default=None)  # per-row source project (pooled tables)

    def __post_init__(self):
        rows = _frozen(self.rows)
        if rows.ndim != 2 or rows.shape[1] != self.schema.n_features:
            raise SchemaError(
                f"{self.project_id}: rows have shape {rows.shape}, schema expects "
                f"{self.schema.n_features} columns"
            )
        labels = _frozen(self.labels)
        if labels.shape != (rows.shape[0],):
            raise SchemaError(f"{self.project_id}: label vector length mismatch")
        if np.isnan(rows).any() or np.isnan(labels).any():
            raise SchemaError(f"{self.project_id}: NaN values are not allowed")
        if self.schema.task == CLASSIFICATION and not np.isin(labels, (0.0, 1.0)).all():
            raise SchemaError(f"{self.project_id}: classification labels must be 0/1")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)
        if self.effort is not None:
            effort = _frozen(self.effort)
            if effort.shape != labels.shape:
                raise SchemaError(f"{self.project_id}: effort vector length mismatch")
            if (effort < 0).any():
                raise SchemaError(f"{self.project_id}: negative effort values")
            object.__setattr__(self, "effort", effort)
        ids = np.arange(rows.shape[0]) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64)
        ids = np.ascontiguousarray(ids, dtype=np.int64)
        ids.setflags(write=False)
        object.__setattr__(self, "row_ids", ids)
        if self.origin is not None:
            origin = np.asarray(self.origin, dtype=object)
            if origin.shape != labels.shape:
                raise SchemaError(f"{self.project_id}: origin vector length mismatch")
            origin.setflags(write=False)
            object.__setattr__(self, "origin", origin)

    def __len__(self) -> int:
        return self.rows.shape[0]

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    def take(self, idx, project_id: str | None = None) -> "ProjectTable":
        idx = np.asarray(idx, dtype=np.int64)
        return ProjectTable(
            project_id if project_id is not None else self.project_id,
            self.schema,
            self.rows[idx],
            self.labels[idx],
            None if self.effort is None else self.effort[idx],
            self.row_ids[idx],
            None if self.origin is None else self.origin[idx],
        )

    def origins(self) -> np.ndarray:
        if self.origin is not None:
            return self.origin
        return np.full(self.n_rows, self.project_id, dtype=object)

    def row_keys(self) -> set:
        """(source project, original row position) for every non-synthetic row."""
        return {(o, int(r)) for o, r in zip(self.origins(), self.row_ids) if r >= 0}

    def select_features(self, idx) -> "ProjectTable":
        """Same rows restricted to the feature columns ``idx`` (schema narrowed to match)."""
        idx = list(idx)
        names = tuple(self.schema.feature_names[i] for i in idx)
        schema = FeatureSchema(self.schema.task, names, self.schema.label_name, self.schema.effort_name)
        return ProjectTable(self.project_id, schema, self.rows[:, idx], self.labels,
                            self.effort, self.row_ids, self.origin)

    def class_counts(self) -> tuple[int, int]:
        pos = int(self.labels.sum())
        return self.n_rows - pos, pos


def concat_tables(tables: Sequence[ProjectTable], project_id: str = "pooled") -> ProjectTable:
    """Stack several projects into one table (the pooled "global" training set)."""
    if not tables:
        raise EmptyTable("nothing to pool")
    schema = tables[0].schema
    for t in tables:
        if t.schema != schema:
            raise SchemaError(f"{t.project_id}: schema differs from {tables[0].project_id}")
    effort = None
    if all(t.effort is not None for t in tables):
        effort = np.concatenate([t.effort for t in tables])
    return ProjectTable(
        project_id,
        schema,
        np.vstack([t.rows for t in tables]),
        np.concatenate([t.labels for t in tables]),
        effort,
        np.concatenate([t.row_ids for t in tables]),
        np.concatenate([t.origins() for t in tables]),
    )


# --------------------------------------------------------------------------- loading

def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path}: file is empty")
        body = [r for r in reader if r and any(c.strip() for c in r)]
    return [h.strip() for h in header], body


def _numeric_column(path, body, col_idx, name) -> np.ndarray:
    out = np.empty(len(body))
    for i, r in enumerate(body):
        cell = r[col_idx].strip() if col_idx < len(r) else ""
        try:
            v = float(cell)
        except ValueError:
            raise NonNumericCell(path, i, name, cell) from None
        if math.isnan(v) or math.isinf(v):
            raise NonNumericCell(path, i, name, cell)
        out[i] = v
    return out


def load_project_table(path, schema: FeatureSchema, project_id: str | None = None) -> ProjectTable:
    """Read ``path`` and reorder its columns to ``schema`` order."""
    header, body = _read_csv(path)
    if not body:
        raise EmptyFile(f"{path}: header but no data rows")
    pos = {h: i for i, h in enumerate(header)}
    needed = list(schema.feature_names) + [schema.label_name]
    if schema.effort_name and schema.effort_name not in schema.feature_names:
        needed.append(schema.effort_name)
    missing = [c for c in needed if c not in pos]
    if missing:
        raise MissingColumn(f"{path}: missing column(s) {missing}")
    cols = {c: _numeric_column(path, body, pos[c], c) for c in needed}
    rows = np.column_stack([cols[c] for c in schema.feature_names])
    effort = cols[schema.effort_name] if schema.effort_name else None
    pid = project_id if project_id is not None else Path(path).stem
    return ProjectTable(pid, schema, rows, cols[schema.label_name], effort)


def write_project_table(table: ProjectTable, path) -> None:
    s = table.schema
    header = list(s.feature_names) + [s.label_name]
    extra_effort = s.effort_name is not None and s.effort_name not in s.feature_names
    if extra_effort:
        header.append(s.effort_name)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(table.n_rows):
            row = [repr(float(v)) for v in table.rows[i]] + [repr(float(table.labels[i]))]
            if extra_effort:
                row.append(repr(float(table.effort[i])))
            w.writerow(row)


def corpus_project_files(corpus) -> list[Path]:
    corpus = Path(corpus)
    if not corpus.is_dir():
        raise ValidationError(f"{corpus}: not a directory")
    files = sorted(p for p in corpus.glob("*.csv") if p.name != "meta.csv")
    if not files:
        raise EmptyFile(f"{corpus}: no project CSV files")
    return files


def load_corpus(corpus, schema: FeatureSchema) -> list[ProjectTable]:
    return [load_project_table(p, schema) for p in corpus_project_files(corpus)]


# --------------------------------------------------------------------------- summaries

@dataclass(frozen=True, eq=False)
class SummaryVector:
    project_id: str
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))


def summarize(table: ProjectTable) -> SummaryVector:
    """Column medians of the feature block (label and effort excluded)."""
    if table.n_rows == 0:
        raise EmptyTable(f"{table.project_id}: no rows to summarize")
    return SummaryVector(table.project_id, np.median(table.rows, axis=0))


# --------------------------------------------------------------------------- splitting

def split_projects(projects: Sequence[ProjectTable], seed: int, test_fraction: float = 0.1):
    """Random 90:10 partition of the project list into (train1, test1).

    The test count is ``round_half_up(0.1 * N)``; both halves keep input order.
    """
    n = len(projects)
    if n < 10:
        raise TooFewProjects(f"need at least 10 projects, got {n}")
    n_test = int(math.floor(test_fraction * n + 0.5))
    perm = np.random.default_rng(seed).permutation(n)
    test_idx = set(perm[:n_test].tolist())
    train1 = [p for i, p in enumerate(projects) if i not in test_idx]
    test1 = [p for i, p in enumerate(projects) if i in test_idx]
    return train1, test1


def _largest_remainder(sizes: Sequence[int], total: int) -> list[int]:
    n = sum(sizes)
    quotas = [s * total / n for s in sizes]
    alloc = [int(math.floor(q)) for q in quotas]
    order = sorted(range(len(sizes)), key=lambda i: (-(quotas[i] - alloc[i]), i))
    for i in order[: total - sum(alloc)]:
        alloc[i] += 1
    return alloc


def split_rows(table: ProjectTable, seed: int, chronological: bool = False):
    """2:1 split of one project's rows into (train2, test2).

    ``|train2| = floor(2n/3)``. Classification tables are stratified by label
    when both classes have at least 3 rows (per-class shares by largest
    remainder). ``chronological`` keeps the earliest rows for training.
    """
    n = table.n_rows
    if n < 3:
        raise TooFewRows(f"{table.project_id}: need at least 3 rows, got {n}")
    n_train = (2 * n) // 3
    if chronological:
        idx = np.arange(n)
        return table.take(idx[:n_train]), table.take(idx[n_train:])

    rng = np.random.default_rng(seed)
    strata = [np.arange(n)]
    if table.schema.task == CLASSIFICATION:
        neg = np.flatnonzero(table.labels == 0)
        pos = np.flatnonzero(table.labels == 1)
        if len(neg) >= 3 and len(pos) >= 3:
            strata = [neg, pos]
    shares = _largest_remainder([len(s) for s in strata], n_train)
    train, test = [], []
    for members, k in zip(strata, shares):
        perm = rng.permutation(members)
        train.append(perm[:k])
        test.append(perm[k:])
    train_idx = np.sort(np.concatenate(train))
    test_idx = np.sort(np.concatenate(test))
    return table.take(train_idx), table.take(test_idx)


# --------------------------------------------------------------------------- sanity checks

@dataclass(frozen=True)
class ProjectMeta:
    pull_requests: int
    commits: int
    duration_weeks: int
    issues: int
    contributors: int
    defective_commits: int
    is_fork: bool
    is_software: bool

    def __post_init__(self):
        for name in ("pull_requests", "commits", "duration_weeks", "issues",
                     "contributors", "defective_commits"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")


SANITY_RULES = (
    ("Collaboration", "must have at least one pull request", lambda m: m.pull_requests >= 1),
    ("Commits", "must contain more than 20 commits", lambda m: m.commits > 20),
    ("Duration", "must contain development activity of at least 50 weeks", lambda m: m.duration_weeks >= 50),
    ("Issues", "must contain more than ten issues", lambda m: m.issues > 10),
    ("Personal", "must have at least ten contributors", lambda m: m.contributors >= 10),
    ("Software Development", "must be a software development project", lambda m: m.is_software),
    ("Defective Commits", "must have at least ten defective commits", lambda m: m.defective_commits >= 10),
    ("Forked Project", "must not be a fork", lambda m: not m.is_fork),
)


@dataclass(frozen=True)
class SanityResult:
    passed: bool
    failed: tuple

    def messages(self) -> list[str]:
        text = {name: msg for name, msg, _ in SANITY_RULES}
        return [f"{name}: {text[name]}" for name in self.failed]


def sanity_check(meta: ProjectMeta) -> SanityResult:
    failed = tuple(name for name, _, ok in SANITY_RULES if not ok(meta))
    return SanityResult(not failed, failed)


_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f"}


def _parse_bool(s: str, where: str) -> bool:
    v = s.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ValidationError(f"{where}: expected a boolean, got {s!r}")


def load_meta(path) -> dict[str, ProjectMeta]:
    """Read ``meta.csv``: a ``project_id`` column plus one column per ProjectMeta field."""
    header, body = _read_csv(path)
    fields = ["project_id", "pull_requests", "commits", "duration_weeks", "issues",
              "contributors", "defective_commits", "is_fork", "is_software"]
    missing = [f for f in fields if f not in header]
    if missing:
        raise MissingColumn(f"{path}: missing column(s) {missing}")
    pos = {h: i for i, h in enumerate(header)}
    out = {}
    for i, r in enumerate(body):
        where = f"{path}: row {i}"
        vals = {}
        for f in fields[1:7]:
            cell = r[pos[f]].strip()
            try:
                vals[f] = int(float(cell))
            except ValueError:
                raise NonNumericCell(path, i, f, cell) from None
        meta = ProjectMeta(
            **vals,
            is_fork=_parse_bool(r[pos["is_fork"]], where),
            is_software=_parse_bool(r[pos["is_software"]], where),
        )
        out[r[pos["project_id"]].strip()] = meta
    return out


# --------------------------------------------------------------------------- project health

def load_health_series(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a monthly series CSV: returns (months, matrix[T, 13]) sorted by month."""
    header, body = _read_csv(path)
    if not body:
        raise EmptyFile(f"{path}: header but no data rows")
    needed = ("month",) + HEALTH_METRICS
    missing = [c for c in needed if c not in header]
    if missing:
        raise MissingColumn(f"{path}: missing column(s) {missing}")
    pos = {h: i for i, h in enumerate(header)}
    months = _numeric_column(path, body, pos["month"], "month")
    series = np.column_stack([_numeric_column(path, body, pos[m], m) for m in HEALTH_METRICS])
    order = np.argsort(months, kind="stable")
    return months[order], series[order]


def build_health_instances(series, horizon: int = 6, goal: str = "MC",
                           project_id: str = "project", include_goal: bool = False) -> ProjectTable:
    """Turn a (T, 13) monthly metric matrix into supervised rows.

    Row ``t`` holds the month-``t`` metrics and the target is ``goal`` at month
    ``t + horizon``. By default the goal's own current value is left out of the
    features; ``include_goal=True`` keeps all 13 metrics.
    """
    schema = health_schema(goal, include_goal)
    series = np.asarray(series, dtype=float)
    if series.ndim != 2 or series.shape[1] != len(HEALTH_METRICS):
        raise SchemaError(f"series must have {len(HEALTH_METRICS)} metric columns")
    if horizon < 1:
        raise ValidationError("horizon must be at least one month")
    T = series.shape[0]
    if T <= horizon:
        raise SeriesTooShort(f"{project_id}: {T} months is not longer than the {horizon}-month horizon")
    cols = [HEALTH_METRICS.index(f) for f in schema.feature_names]
    g = HEALTH_METRICS.index(goal)
    rows = series[: T - horizon][:, cols]
    target = series[horizon:, g]
    if (target < 0).any():
        raise SchemaError(f"{project_id}: negative {goal} counts")
    return ProjectTable(project_id, schema, rows, target)


def load_health_corpus(corpus, goal: str, horizon: int = 6,
                       include_goal: bool = False) -> list[ProjectTable]:
    out = []
    for p in corpus_project_files(corpus):
        _, series = load_health_series(p)
        out.append(build_health_instances(series, horizon, goal, p.stem, include_goal))
    return out


def project_ids(tables: Iterable[ProjectTable]) -> list[str]:
    return [t.project_id for t in tables]


def ensure_dir(path) -> Path:
    os.makedirs(path, exist_ok=True)
    return Path(path)
