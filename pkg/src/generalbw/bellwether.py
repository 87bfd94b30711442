"""Exponential-loss domination, cluster tournaments and bottom-up promotion.

A tournament trains one model per candidate project, scores it on every
other candidate and keeps the candidate whose aggregated goal vector loses
the fewest pairwise comparisons. ``general`` runs tournaments in every leaf
cluster of a CF-tree and then among the winners of sibling clusters, up to
the root.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .cluster import ClusterTree, descend
from .data import ProjectTable, summarize
from .errors import (
    EmptyCluster,
    GoalMismatch,
    InconsistentSizes,
    LevelOutOfRange,
    NoDefects,
    ValidationError,
)
from .metrics import GoalVector, score_model
from .pipeline import FittedPipeline, PipelineConfig, derive_seed, fit_pipeline


# --------------------------------------------------------------------------- domination

def _check_pair(x: GoalVector, y: GoalVector) -> None:
    if x.names != y.names or x.weights != y.weights:
        raise GoalMismatch(f"goal vectors disagree: {x.names}/{x.weights} vs {y.names}/{y.weights}")


def loss(x: GoalVector, y: GoalVector) -> float:
    """sum_j -exp(w_j (x_j - y_j) / n) / n over the n goals."""
    _check_pair(x, y)
    n = x.n
    w = np.asarray(x.weights, dtype=float)
    d = w * (np.asarray(x.values) - np.asarray(y.values)) / n
    return float(np.sum(-np.exp(d) / n))


def worse(x: GoalVector, y: GoalVector) -> bool:
    return loss(x, y) > loss(y, x)


def normalize_goals(vectors: Sequence[GoalVector]) -> list[GoalVector]:
    """Min-max scale every goal over the given vectors; constant goals map to 0."""
    if not vectors:
        return []
    for v in vectors[1:]:
        _check_pair(vectors[0], v)
    V = np.array([v.values for v in vectors], dtype=float)
    lo, hi = V.min(axis=0), V.max(axis=0)
    span = hi - lo
    Z = np.where(span > 0, (V - lo) / np.where(span > 0, span, 1.0), 0.0)
    return [v.with_values(z) for v, z in zip(vectors, Z)]


def aggregate(vectors: Sequence[GoalVector]) -> GoalVector:
    """Per-goal median over targets."""
    if not vectors:
        raise EmptyCluster("no goal vectors to aggregate")
    V = np.array([v.values for v in vectors], dtype=float)
    return vectors[0].with_values(np.median(V, axis=0))


def loss_counts(vectors: Mapping[str, GoalVector]) -> dict:
    """Round-robin: how many others each candidate is ``worse`` than."""
    ids = list(vectors)
    norm = dict(zip(ids, normalize_goals([vectors[i] for i in ids])))
    out = {}
    for i in ids:
        out[i] = sum(1 for j in ids if j != i and worse(norm[i], norm[j]))
    return out


def pick_winner(counts: Mapping[str, int]) -> str:
    return min(counts, key=lambda pid: (counts[pid], pid))


# --------------------------------------------------------------------------- tournaments

class ModelCache:
    """Trained pipelines keyed by project id, shared across the tournaments of one run.

    Each project's model uses a seed derived from the run seed and its id, so it
    is the same model whichever tournament trains it first.
    """

    def __init__(self, config: PipelineConfig, seed: int,
                 on_train: Callable[[ProjectTable], None] | None = None):
        self.config = config
        self.seed = seed
        self.on_train = on_train
        self._models: dict = {}
        self.trainings = 0

    def get(self, table: ProjectTable):
        """The fitted pipeline, or the exception its training raised."""
        pid = table.project_id
        if pid not in self._models:
            self.trainings += 1
            try:
                self._models[pid] = fit_pipeline(table, self.config, derive_seed(self.seed, "source", pid),
                                                 on_train=self.on_train)
            except (ValidationError, ArithmeticError) as exc:
                self._models[pid] = exc
        return self._models[pid]

    def __contains__(self, pid) -> bool:
        return pid in self._models


@dataclass
class TournamentResult:
    winner: str
    per_candidate: dict          # project_id -> aggregated GoalVector
    pairwise_losses: dict        # project_id -> number of comparisons lost
    comparisons_made: int        # source -> target model evaluations
    models: dict = field(default_factory=dict)
    per_target: dict = field(default_factory=dict)   # (source, target) -> GoalVector
    disqualified: dict = field(default_factory=dict)  # project_id -> reason


def tournament(candidates: Sequence[ProjectTable], config: PipelineConfig, seed: int = 0,
               cache: ModelCache | None = None,
               on_train: Callable[[ProjectTable], None] | None = None) -> TournamentResult:
    """Find the candidate whose model transfers best to the other candidates.

    Targets on which a goal is undefined (no defects) are skipped for
    aggregation but still count as evaluations. A source whose training fails,
    or that could not be scored anywhere, is disqualified.
    """
    if not candidates:
        raise EmptyCluster("tournament needs at least one candidate")
    ids = [c.project_id for c in candidates]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate candidates in tournament")
    cache = cache or ModelCache(config, seed, on_train)

    if len(candidates) == 1:
        model = cache.get(candidates[0])
        if isinstance(model, Exception):
            raise EmptyCluster(f"sole candidate {ids[0]} failed to train: {model}")
        return TournamentResult(ids[0], {}, {ids[0]: 0}, 0, {ids[0]: model})

    models, per_target, per_candidate, disq = {}, {}, {}, {}
    made = 0
    for src in candidates:
        model = cache.get(src)
        if isinstance(model, Exception):
            disq[src.project_id] = f"training failed: {model}"
            continue
        models[src.project_id] = model
        scored = []
        for tgt in candidates:
            if tgt.project_id == src.project_id:
                continue
            made += 1
            try:
                gv = score_model(model, tgt)
            except NoDefects:
                continue
            per_target[(src.project_id, tgt.project_id)] = gv
            scored.append(gv)
        if scored:
            per_candidate[src.project_id] = aggregate(scored)
        else:
            disq[src.project_id] = "no target could be scored"
    if not per_candidate:
        raise EmptyCluster(f"every candidate in {ids} was disqualified")
    counts = loss_counts(per_candidate)
    return TournamentResult(pick_winner(counts), per_candidate, counts, made,
                            models, per_target, disq)


# --------------------------------------------------------------------------- hierarchy

def cluster_key(cluster_id: tuple) -> str:
    """'r' for the root, 'r.0.3' for entry 3 of entry 0."""
    return ".".join(["r", *map(str, cluster_id)])


def parse_cluster_key(key: str) -> tuple:
    parts = key.split(".")
    if parts[0] != "r":
        raise ValidationError(f"bad cluster key {key!r}")
    try:
        return tuple(int(p) for p in parts[1:])
    except ValueError:
        raise ValidationError(f"bad cluster key {key!r}") from None


@dataclass
class BellwetherMap:
    levels: dict                 # level -> {cluster_id: project_id}
    models: dict                 # project_id -> FittedPipeline
    comparisons: dict            # level -> evaluations made at that level
    tournaments: dict = field(default_factory=dict)  # (level, cluster_id) -> TournamentResult

    @property
    def total_comparisons(self) -> int:
        return sum(self.comparisons.values())

    @property
    def depth(self) -> int:
        return max(self.levels)

    def winner(self, level: int, cluster_id: tuple) -> str:
        if level not in self.levels:
            raise LevelOutOfRange(f"level {level} not populated")
        return self.levels[level][tuple(cluster_id)]

    def model(self, level: int, cluster_id: tuple) -> FittedPipeline:
        return self.models[self.winner(level, cluster_id)]

    def to_manifest(self) -> dict:
        return {
            "levels": {str(lv): {cluster_key(c): pid for c, pid in sorted(m.items())}
                       for lv, m in sorted(self.levels.items())},
            "comparisons": {str(lv): n for lv, n in sorted(self.comparisons.items())},
        }

    @classmethod
    def from_manifest(cls, d: dict, models: dict) -> "BellwetherMap":
        levels = {int(lv): {parse_cluster_key(k): pid for k, pid in m.items()}
                  for lv, m in d["levels"].items()}
        return cls(levels, dict(models), {int(k): v for k, v in d["comparisons"].items()})


def general(tree: ClusterTree, projects: Mapping[str, ProjectTable], config: PipelineConfig,
            seed: int = 0, cache: ModelCache | None = None,
            on_train: Callable[[ProjectTable], None] | None = None) -> BellwetherMap:
    """Leaf tournaments, then tournaments among sibling winners up to the root.

    A cluster whose candidates were all disqualified has no winner and
    promotes nothing.
    """
    missing = set(tree.member_index) - set(projects)
    if missing:
        raise ValidationError(f"tree members without tables: {sorted(missing)[:5]}")
    cache = cache or ModelCache(config, seed, on_train)
    depth = tree.depth
    levels, comparisons, results = {}, {}, {}

    leaf = {}
    made = 0
    for cid in tree.cluster_ids(depth):
        try:
            r = tournament([projects[p] for p in tree.members(cid)], config, seed, cache)
        except EmptyCluster:
            continue
        leaf[cid] = r.winner
        results[(depth, cid)] = r
        made += r.comparisons_made
    levels[depth], comparisons[depth] = leaf, made

    for level in range(depth - 1, -1, -1):
        below, cur, made = levels[level + 1], {}, 0
        for cid in tree.cluster_ids(level):
            promoted = [below[c] for c in tree.children(cid) if c in below]
            if not promoted:
                continue
            r = tournament([projects[p] for p in promoted], config, seed, cache)
            cur[cid] = r.winner
            results[(level, cid)] = r
            made += r.comparisons_made
        levels[level], comparisons[level] = cur, made

    used = {pid for m in levels.values() for pid in m.values()}
    models = {pid: cache.get(projects[pid]) for pid in sorted(used)}
    return BellwetherMap(levels, models, comparisons, results)


def bellwether0(projects: Sequence[ProjectTable], config: PipelineConfig, seed: int = 0,
                cache: ModelCache | None = None,
                on_train: Callable[[ProjectTable], None] | None = None) -> TournamentResult:
    """The flat tournament over every project."""
    return tournament(projects, config, seed, cache, on_train)


# --------------------------------------------------------------------------- budget

@dataclass(frozen=True)
class ComparisonBudget:
    N: int
    m: int
    leaf_comparisons: int
    promotion_comparisons: int

    @property
    def total(self) -> int:
        return self.leaf_comparisons + self.promotion_comparisons

    @property
    def flat(self) -> int:
        """Evaluations of the flat tournament over all N projects."""
        return self.N * (self.N - 1)


def comparison_budget(N: int, leaf_sizes: Sequence[int],
                      internal_fanouts: Sequence[int] | None = None) -> ComparisonBudget:
    """Model evaluations needed by the hierarchical search.

    ``internal_fanouts`` lists the number of promoted children at each internal
    node; by default a single root sits directly over all leaves.
    """
    sizes = [int(c) for c in leaf_sizes]
    if any(c < 1 for c in sizes) or sum(sizes) != N:
        raise InconsistentSizes(f"leaf sizes sum to {sum(sizes)}, expected N = {N}")
    m = len(sizes)
    fan = [m] if internal_fanouts is None else [int(f) for f in internal_fanouts]
    return ComparisonBudget(N, m, sum(c * (c - 1) for c in sizes), sum(f * (f - 1) for f in fan))


def budget_for_tree(tree: ClusterTree) -> ComparisonBudget:
    depth = tree.depth
    sizes = [len(tree.members(c)) for c in tree.cluster_ids(depth)]
    fan = [len(tree.children(c)) for lv in range(depth) for c in tree.cluster_ids(lv)]
    return comparison_budget(tree.n_projects, sizes, fan)


# --------------------------------------------------------------------------- indexing

@dataclass
class IndexResult:
    path: tuple
    cluster_id: tuple
    project_id: str
    model: FittedPipeline
    predictions: np.ndarray


def apply_index(tree: ClusterTree, bmap: BellwetherMap, level: int,
                new_project: ProjectTable) -> IndexResult:
    """Route a new project down the tree and use the level-``level`` bellwether above it.

    If that cluster has no winner (all its candidates were disqualified) the
    nearest populated ancestor is used.
    """
    if level not in bmap.levels or not 0 <= level <= tree.depth:
        raise LevelOutOfRange(f"level {level} is not populated (have {sorted(bmap.levels)})")
    path = descend(tree, summarize(new_project))
    for lv in range(level, -1, -1):
        cid = path[:lv]
        if cid in bmap.levels.get(lv, {}):
            break
    else:
        raise LevelOutOfRange(f"no bellwether on the path {path} at or above level {level}")
    pid = bmap.levels[lv][cid]
    model = bmap.models[pid]
    return IndexResult(path, cid, pid, model, model.predict(new_project.rows))
