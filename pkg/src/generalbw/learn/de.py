"""Differential evolution (DE/rand/1/bin) for hyperparameter tuning."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ..errors import InvalidBounds


@dataclass(frozen=True)
class Bound:
    low: float
    high: float
    integer: bool = False


@dataclass
class DEResult:
    params: dict
    score: float
    evaluations: int
    history: list = field(default_factory=list)  # best-so-far after init and each generation


def _decode(vec, names, bounds) -> dict:
    out = {}
    for v, name in zip(vec, names):
        b = bounds[name]
        out[name] = int(np.clip(np.rint(v), b.low, b.high)) if b.integer else float(v)
    return out


def de_tune(objective: Callable[[dict], float], bounds: Mapping[str, Bound | tuple],
            population: int = 20, generations: int = 10, F: float = 0.75, CR: float = 0.3,
            seed=0) -> DEResult:
    """Minimize ``objective`` over a box; returns the best point ever evaluated.

    Uses ``population * (generations + 1)`` objective calls. Trial vectors are
    clipped to the box; a trial replaces its target when it is no worse.
    """
    if not bounds:
        raise InvalidBounds("no parameters to tune")
    if population < 4:
        raise InvalidBounds("DE/rand/1 needs a population of at least 4")
    if generations < 0:
        raise InvalidBounds("generations must be >= 0")
    bnd = {k: (v if isinstance(v, Bound) else Bound(*v)) for k, v in bounds.items()}
    names = list(bnd)
    lo = np.array([bnd[k].low for k in names], dtype=float)
    hi = np.array([bnd[k].high for k in names], dtype=float)
    if not (np.isfinite(lo).all() and np.isfinite(hi).all()) or (lo > hi).any():
        raise InvalidBounds(f"bad bounds {dict(zip(names, zip(lo, hi)))}")
    d = len(names)
    rng = np.random.default_rng(seed)

    pop = lo + rng.random((population, d)) * (hi - lo)
    scores = np.array([float(objective(_decode(p, names, bnd))) for p in pop])
    evals = population
    b = int(np.argmin(scores))
    best_vec, best = pop[b].copy(), float(scores[b])
    history = [best]

    for _ in range(generations):
        for i in range(population):
            others = [j for j in range(population) if j != i]
            a, bb, c = rng.choice(others, size=3, replace=False)
            mutant = pop[a] + F * (pop[bb] - pop[c])
            cross = rng.random(d) < CR
            cross[rng.integers(d)] = True
            trial = np.clip(np.where(cross, mutant, pop[i]), lo, hi)
            s = float(objective(_decode(trial, names, bnd)))
            evals += 1
            if s <= scores[i]:
                pop[i], scores[i] = trial, s
            if s < best:
                best_vec, best = trial.copy(), s
        history.append(best)

    return DEResult(_decode(best_vec, names, bnd), best, evals, history)
