"""Classical and effort-aware performance measures, packed into goal vectors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GoalMismatch, LengthMismatch, NoDefects, ValidationError, ZeroEffort

CLASSIFICATION_GOALS = ("recall", "false_alarm", "precision", "popt20", "ifa")
CLASSIFICATION_WEIGHTS = (1, -1, 1, 1, -1)
REGRESSION_GOALS = ("mre",)
REGRESSION_WEIGHTS = (-1,)


@dataclass(frozen=True)
class GoalVector:
    values: tuple
    weights: tuple
    names: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "weights", tuple(int(w) for w in self.weights))
        object.__setattr__(self, "names", tuple(self.names))
        if not (len(self.values) == len(self.weights) == len(self.names)):
            raise GoalMismatch("values, weights and names differ in length")
        if any(w not in (-1, 1) for w in self.weights):
            raise GoalMismatch("weights must be +1 (maximize) or -1 (minimize)")

    @property
    def n(self) -> int:
        return len(self.values)

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values))

    def with_values(self, values) -> "GoalVector":
        return GoalVector(tuple(values), self.weights, self.names)


def classification_goals(recall, false_alarm, precision, popt20, ifa) -> GoalVector:
    return GoalVector((recall, false_alarm, precision, popt20, ifa),
                      CLASSIFICATION_WEIGHTS, CLASSIFICATION_GOALS)


def regression_goals(mre_value) -> GoalVector:
    return GoalVector((mre_value,), REGRESSION_WEIGHTS, REGRESSION_GOALS)


def _ratio(a, b) -> float:
    return a / b if b else 0.0


def confusion_metrics(pred_labels, true_labels) -> tuple[float, float, float]:
    """(recall, precision, false_alarm); any 0/0 is reported as 0."""
    p = np.asarray(pred_labels, dtype=float).ravel()
    t = np.asarray(true_labels, dtype=float).ravel()
    if p.shape != t.shape:
        raise LengthMismatch(f"{p.size} predictions vs {t.size} labels")
    if p.size == 0:
        raise ValidationError("no predictions to score")
    pp, tt = p == 1, t == 1
    tp = int(np.sum(pp & tt))
    fp = int(np.sum(pp & ~tt))
    fn = int(np.sum(~pp & tt))
    tn = int(np.sum(~pp & ~tt))
    return _ratio(tp, tp + fn), _ratio(tp, tp + fp), _ratio(fp, fp + tn)


def rank_for_inspection(scores, effort) -> np.ndarray:
    """Inspection order: score descending, then effort ascending, then index."""
    s = np.asarray(scores, dtype=float).ravel()
    e = np.asarray(effort, dtype=float).ravel()
    if s.shape != e.shape:
        raise LengthMismatch(f"{s.size} scores vs {e.size} effort values")
    if (e < 0).any():
        raise ValidationError("effort must be non-negative")
    # lexsort: last key is primary
    return np.lexsort((np.arange(s.size), e, -s))


@dataclass(frozen=True)
class InspectionCurve:
    ordering: np.ndarray
    cum_effort: np.ndarray
    M: int
    N_def: int
    m20: int
    n20: int
    k_first: int  # changes inspected when the first defect turns up (1-based)


def inspection_curve(scores, effort, true_labels, budget: float = 0.2) -> InspectionCurve:
    t = np.asarray(true_labels, dtype=float).ravel()
    e = np.asarray(effort, dtype=float).ravel()
    order = rank_for_inspection(scores, effort)
    if t.shape != e.shape:
        raise LengthMismatch(f"{t.size} labels vs {e.size} effort values")
    total = float(e.sum())
    if total <= 0:
        raise ZeroEffort("total effort is zero")
    n_def = int(t.sum())
    if n_def == 0:
        raise NoDefects("no defective changes; IFA is undefined")
    cum = np.cumsum(e[order]) / total
    # the change that crosses the budget boundary counts as inspected
    m20 = int(np.searchsorted(cum, budget - 1e-12, side="left")) + 1
    m20 = min(m20, t.size)
    hits = t[order]
    n20 = int(hits[:m20].sum())
    k_first = int(np.argmax(hits == 1)) + 1
    return InspectionCurve(order, cum, t.size, n_def, m20, n20, k_first)


def effort_metrics(scores, effort, true_labels) -> tuple[float, int, float]:
    """(popt20, ifa, recall_at_20).

    popt20 is the share of changes read once 20% of the total effort has
    been spent; recall_at_20 is the share of defects found by then; ifa counts
    clean changes inspected before the first defective one.
    """
    c = inspection_curve(scores, effort, true_labels)
    return c.m20 / c.M, c.k_first - 1, c.n20 / c.N_def


def mre(predicted, actual):
    """|predicted - actual| / max(1, actual); vectorizes over arrays."""
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if (a < 0).any():
        raise ValidationError("actual values must be non-negative")
    out = np.abs(p - a) / np.maximum(1.0, a)
    return float(out) if out.ndim == 0 else out


def score_classifier(proba, true_labels, effort, threshold: float = 0.5) -> GoalVector:
    proba = np.asarray(proba, dtype=float)
    pred = (proba >= threshold).astype(float)
    recall, precision, false_alarm = confusion_metrics(pred, true_labels)
    popt20, ifa, _ = effort_metrics(proba, effort, true_labels)
    return classification_goals(recall, false_alarm, precision, popt20, ifa)


def score_model(model, test_table, task: str | None = None) -> GoalVector:
    """Score a fitted model on a held-out table.

    Classification yields the five-goal vector; regression yields the median
    MRE over the rows.
    """
    from .data import CLASSIFICATION

    task = task or test_table.schema.task
    if test_table.n_rows == 0:
        raise ValidationError("empty test table")
    if task == CLASSIFICATION:
        if test_table.effort is None:
            raise ValidationError(f"{test_table.project_id}: effort column needed for effort-aware metrics")
        return score_classifier(model.predict_proba(test_table.rows), test_table.labels, test_table.effort)
    pred = model.predict_value(test_table.rows)
    return regression_goals(float(np.median(mre(pred, test_table.labels))))


# Report units: rates as percentages, IFA as a count, MRE as a ratio.
PERCENT_GOALS = {"recall", "false_alarm", "precision", "popt20"}


def report_value(name: str, value: float) -> float:
    return value * 100.0 if name in PERCENT_GOALS else value
