"""Synthetic corpora with known structure, for tests, sweeps and demos.

Defect corpora: projects come in groups. Every group occupies its own spot
in the feature space (so BIRCH separates groups) and every project in a group
covers its own narrow band of ``la`` values inside that spot. Labels follow
one global concept: a change is buggy when ``ld`` exceeds a threshold that
depends on the band. A model trained on one band only learns that band's
threshold; a model trained on all bands of its group learns them all.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import DEFECT_SCHEMA, HEALTH_METRICS, ProjectMeta, ProjectTable, ensure_dir, write_project_table

_LA = DEFECT_SCHEMA.feature_names.index("la")
_LD = DEFECT_SCHEMA.feature_names.index("ld")
_BACKGROUND = [j for j in range(DEFECT_SCHEMA.n_features) if j not in (_LA, _LD)]

GROUP_SPACING = 1000.0  # distance between groups along the band axis
BAND_SPACING = 4.0      # distance between project bands inside a group


@dataclass(frozen=True)
class GroupSpec:
    location: np.ndarray   # per-feature mean of the group's background features
    ld_offset: float       # keeps ld medians apart between groups, not within them
    thresholds: np.ndarray  # per-band ld threshold


def _group_specs(n_groups: int, bands: int, rng) -> list[GroupSpec]:
    specs = []
    for _ in range(n_groups):
        # corners of a hypercube keep any two groups at least one edge apart (almost surely)
        loc = 60.0 * rng.integers(0, 2, size=len(_BACKGROUND)) + rng.uniform(0.0, 5.0, size=len(_BACKGROUND))
        thr = np.linspace(1.5, 8.5, bands) if bands > 1 else np.array([5.0])
        specs.append(GroupSpec(loc, float(rng.uniform(0.0, 60.0)), thr))
    return specs


def _rows_for_bands(g: int, spec: GroupSpec, bands: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
    n = bands.shape[0]
    X = np.empty((n, DEFECT_SCHEMA.n_features))
    X[:, _BACKGROUND] = spec.location + rng.normal(0.0, 1.0, size=(n, len(_BACKGROUND)))
    X[:, _LA] = g * GROUP_SPACING + bands * BAND_SPACING + rng.normal(0.0, 0.3, size=n)
    ld = rng.uniform(0.0, 10.0, size=n)
    X[:, _LD] = spec.ld_offset + ld
    y = (ld > spec.thresholds[bands]).astype(float)
    return X, y


def _effort(n: int, rng) -> np.ndarray:
    return np.round(rng.lognormal(3.0, 1.0, size=n)) + 1.0


def grouped_defect_corpus(n_groups: int, group_size: int, rows: int = 200, seed: int = 0,
                          plant: bool = False, prefix: str = "p") -> tuple[list[ProjectTable], dict]:
    """Build ``n_groups * group_size`` defect projects.

    With ``plant=True`` the last project of every group is a planted
    bellwether whose rows are drawn from the union of its group-mates' bands.
    Returns the tables and a map group index -> planted project id (empty when
    nothing is planted).
    """
    rng = np.random.default_rng(seed)
    bands = group_size - 1 if plant else group_size
    specs = _group_specs(n_groups, bands, rng)
    tables, planted = [], {}
    for g, spec in enumerate(specs):
        for k in range(group_size):
            pid = f"{prefix}{g:03d}_{k:02d}"
            if plant and k == group_size - 1:
                b = rng.integers(0, bands, size=rows)
                planted[g] = pid
            else:
                b = np.full(rows, k)
            X, y = _rows_for_bands(g, spec, b, rng)
            tables.append(ProjectTable(pid, DEFECT_SCHEMA, X, y, _effort(rows, rng)))
    return tables, planted


def shuffled(tables: Sequence[ProjectTable], seed: int) -> list[ProjectTable]:
    perm = np.random.default_rng(seed).permutation(len(tables))
    return [tables[i] for i in perm]


def health_series(months: int, rng, scale: float = 20.0, trend: float = 0.0) -> np.ndarray:
    """One project's monthly metrics, driven by a shared activity level."""
    t = np.arange(months)
    activity = scale * np.exp(trend * t / max(months, 1)) * (1.0 + 0.3 * np.sin(2 * np.pi * t / 12.0))
    mult = np.linspace(0.2, 1.5, len(HEALTH_METRICS))
    lam = np.outer(activity, mult)
    return rng.poisson(lam).astype(float)


def health_corpus(n_projects: int, months: int = 36, seed: int = 0, n_groups: int = 3) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    scales = rng.uniform(5.0, 80.0, size=n_groups)
    out = []
    for i in range(n_projects):
        g = i % n_groups
        out.append(health_series(months, rng, scales[g] * rng.uniform(0.9, 1.1), rng.uniform(-0.5, 0.5)))
    return out


PASSING_META = ProjectMeta(pull_requests=5, commits=500, duration_weeks=120, issues=40,
                           contributors=15, defective_commits=30, is_fork=False, is_software=True)

_META_FIELDS = ("pull_requests", "commits", "duration_weeks", "issues", "contributors",
                "defective_commits", "is_fork", "is_software")


def write_meta(metas: dict, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("project_id",) + _META_FIELDS)
        for pid, m in metas.items():
            w.writerow([pid] + [str(getattr(m, f)).lower() if isinstance(getattr(m, f), bool)
                                else getattr(m, f) for f in _META_FIELDS])


def write_defect_corpus(tables: Sequence[ProjectTable], corpus, meta: dict | None = None) -> Path:
    """One CSV per project plus a ``meta.csv`` sidecar (all passing by default)."""
    root = ensure_dir(corpus)
    for t in tables:
        write_project_table(t, root / f"{t.project_id}.csv")
    if meta is None:
        meta = {t.project_id: PASSING_META for t in tables}
    write_meta(meta, root / "meta.csv")
    return root


def write_health_corpus(series: Sequence[np.ndarray], corpus, prefix: str = "h") -> Path:
    root = ensure_dir(corpus)
    for i, s in enumerate(series):
        with open(root / f"{prefix}{i:03d}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("month",) + HEALTH_METRICS)
            for t, row in enumerate(s):
                w.writerow([t] + [repr(float(v)) for v in row])
    return root
