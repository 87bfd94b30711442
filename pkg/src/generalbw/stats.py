"""Scott-Knott ranking with a bootstrap test and the Vargha-Delaney A12 effect size."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyInput, ValidationError

SMALL_EFFECT = 0.56


@dataclass(frozen=True)
class TreatmentSamples:
    name: str
    samples: tuple

    def __post_init__(self):
        s = tuple(float(v) for v in self.samples)
        if len(s) < 2:
            raise ValidationError(f"treatment {self.name!r} needs at least 2 samples")
        if not np.all(np.isfinite(s)):
            raise ValidationError(f"treatment {self.name!r} has non-finite samples")
        object.__setattr__(self, "samples", s)

    @property
    def median(self) -> float:
        return float(np.median(self.samples))

    @property
    def iqr(self) -> float:
        q1, q3 = np.percentile(self.samples, [25, 75])
        return float(q3 - q1)


def a12(xs, ys) -> float:
    """P(x > y) + 0.5 P(x = y) over all pairs."""
    x = np.asarray(xs, dtype=float).ravel()
    y = np.sort(np.asarray(ys, dtype=float).ravel())
    if x.size == 0 or y.size == 0:
        raise EmptyInput("a12 needs two nonempty samples")
    below = np.searchsorted(y, x, side="left")
    upto = np.searchsorted(y, x, side="right")
    gt = below.sum()
    eq = (upto - below).sum()
    return float((gt + 0.5 * eq) / (x.size * y.size))


def _t_stat(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Welch-style statistic along the last axis; 0 where both spreads vanish."""
    vx = x.var(axis=-1, ddof=1) / x.shape[-1]
    vy = y.var(axis=-1, ddof=1) / y.shape[-1]
    diff = y.mean(axis=-1) - x.mean(axis=-1)
    sd = np.sqrt(vx + vy)
    return np.where(sd > 0, diff / np.where(sd > 0, sd, 1.0), 0.0)


def bootstrap_sig(xs, ys, iterations: int = 512, alpha: float = 0.05, seed: int = 0) -> bool:
    """Two-sided bootstrap test of a difference in means.

    Both samples are shifted onto the pooled mean (the null hypothesis), then
    resampled; the difference is significant when fewer than ``alpha`` of the
    resampled statistics are at least as extreme as the observed one.
    """
    x = np.asarray(xs, dtype=float).ravel()
    y = np.asarray(ys, dtype=float).ravel()
    if x.size < 2 or y.size < 2:
        raise EmptyInput("bootstrap needs at least two samples on each side")
    if x.var() == 0 and y.var() == 0:
        return bool(x[0] != y[0])
    t_obs = abs(float(_t_stat(x, y)))
    mu = np.concatenate([x, y]).mean()
    x0 = x - x.mean() + mu
    y0 = y - y.mean() + mu
    rng = np.random.default_rng(seed)
    bx = x0[rng.integers(0, x.size, size=(iterations, x.size))]
    by = y0[rng.integers(0, y.size, size=(iterations, y.size))]
    extreme = int(np.sum(np.abs(_t_stat(bx, by)) >= t_obs))
    return extreme / iterations < alpha


def different(xs, ys, seed: int = 0, iterations: int = 512, alpha: float = 0.05,
              effect: float = SMALL_EFFECT) -> bool:
    """Significant (bootstrap) and not trivially small (A12) at once."""
    a = a12(xs, ys)
    if max(a, 1.0 - a) < effect:
        return False
    return bootstrap_sig(xs, ys, iterations, alpha, seed)


def _best_cut(groups: list[np.ndarray]) -> int | None:
    """Cut index maximizing the between-group sum of squares (first wins ties)."""
    sizes = np.array([g.size for g in groups], dtype=float)
    sums = np.array([g.sum() for g in groups])
    n, total = sizes.sum(), sums.sum()
    mu = total / n
    best, best_ss = None, -np.inf
    for cut in range(1, len(groups)):
        nl, sl = sizes[:cut].sum(), sums[:cut].sum()
        nr, sr = n - nl, total - sl
        ss = nl * (sl / nl - mu) ** 2 + nr * (sr / nr - mu) ** 2
        if ss > best_ss:
            best, best_ss = cut, ss
    return best


def scott_knott(treatments: Sequence[TreatmentSamples], minimize: bool = False, seed: int = 0,
                iterations: int = 512, alpha: float = 0.05, effect: float = SMALL_EFFECT) -> dict:
    """Map treatment name -> rank, rank 1 holding the lowest medians.

    ``minimize`` is accepted for symmetry with the report writers; it does
    not change the ranks (see ``rank_rows``).
    """
    if not treatments:
        raise EmptyInput("no treatments to rank")
    names = [t.name for t in treatments]
    if len(set(names)) != len(names):
        raise ValidationError("treatment names must be unique")
    # equal medians fall back to the mean, which is what the split test compares
    order = sorted(treatments, key=lambda t: (t.median, float(np.mean(t.samples)), t.name))
    groups = [np.asarray(t.samples) for t in order]
    labels = np.zeros(len(order), dtype=int)

    def split(lo: int, hi: int) -> None:
        if hi - lo < 2:
            return
        cut = _best_cut(groups[lo:hi])
        left = np.concatenate(groups[lo:lo + cut])
        right = np.concatenate(groups[lo + cut:hi])
        if different(left, right, seed=seed + 7919 * lo + hi, iterations=iterations,
                     alpha=alpha, effect=effect):
            labels[lo + cut:] += 1
            split(lo, lo + cut)
            split(lo + cut, hi)

    split(0, len(order))
    return {t.name: int(r) + 1 for t, r in zip(order, labels)}


# --------------------------------------------------------------------------- reports

@dataclass(frozen=True)
class RankRow:
    criterion: str
    rank: int
    treatment: str
    median: float
    iqr: float
    n: int
    rank1_is: str  # "best" for minimized criteria, "worst" for maximized ones


def rank_rows(criterion: str, treatments: Sequence[TreatmentSamples], minimize: bool,
              seed: int = 0) -> list[RankRow]:
    ranks = scott_knott(treatments, minimize, seed)
    rows = [RankRow(criterion, ranks[t.name], t.name, t.median, t.iqr, len(t.samples),
                    "best" if minimize else "worst") for t in treatments]
    return sorted(rows, key=lambda r: (r.rank, r.median, r.treatment))


RANK_COLUMNS = ("criterion", "rank", "treatment", "median", "iqr", "n", "rank1_is")


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def rank_rows_csv(rows: Sequence[RankRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RANK_COLUMNS)
    for r in rows:
        w.writerow([r.criterion, r.rank, r.treatment, _fmt(r.median), _fmt(r.iqr), r.n, r.rank1_is])
    return buf.getvalue()


def rank_rows_text(rows: Sequence[RankRow]) -> str:
    """Aligned plain-text table, one block per criterion."""
    out = []
    by_crit: dict = {}
    for r in rows:
        by_crit.setdefault(r.criterion, []).append(r)
    for crit, block in by_crit.items():
        out.append(f"{crit} (rank 1 is {block[0].rank1_is})")
        width = max(len("treatment"), *(len(r.treatment) for r in block))
        out.append(f"  {'rank':>4}  {'treatment':<{width}}  {'median':>10}  {'iqr':>10}")
        for r in block:
            out.append(f"  {r.rank:>4}  {r.treatment:<{width}}  {_fmt(r.median):>10}  {_fmt(r.iqr):>10}")
        out.append("")
    return "\n".join(out)
