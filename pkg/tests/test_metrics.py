import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from generalbw.errors import GoalMismatch, LengthMismatch, NoDefects, ZeroEffort
from generalbw.metrics import (
    GoalVector, classification_goals, confusion_metrics, effort_metrics, inspection_curve, mre,
    rank_for_inspection, report_value, score_classifier, score_model,
)
from generalbw.data import REGRESSION

from conftest import make_table


def oracle_walk(scores, effort, labels):
    """Straight-line simulation of a reviewer reading changes in ranked order."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], effort[i], i))
    total = sum(effort)
    read, spent, found, first = 0, 0.0, 0, None
    for pos, i in enumerate(order):
        if first is None and labels[i] == 1:
            first = pos
        if spent < 0.2 * total - 1e-12:
            spent += effort[i]
            read += 1
            found += labels[i]
    return read / len(scores), first, found / sum(labels)


def test_worked_example():
    loc = [10, 10, 10, 70]
    scores = [0.9, 0.8, 0.7, 0.6]
    labels = [0, 1, 0, 1]
    popt, ifa, r20 = effort_metrics(scores, loc, labels)
    assert (popt, ifa, r20) == (0.5, 1, 0.5)
    c = inspection_curve(scores, loc, labels)
    assert (c.m20, c.n20, c.k_first, c.M, c.N_def) == (2, 1, 2, 4, 2)
    assert c.cum_effort[-1] == pytest.approx(1.0)


def test_first_defective_gives_zero_ifa():
    assert effort_metrics([0.9, 0.1], [5, 5], [1, 0])[1] == 0


def test_loc_scaling_invariance():
    rng = np.random.default_rng(0)
    s, e, t = rng.random(30), rng.integers(1, 100, 30), (rng.random(30) < 0.3).astype(float)
    t[0] = 1
    assert effort_metrics(s, e, t) == effort_metrics(s, e * 1000, t)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 40))
def test_walk_matches_oracle(seed, n):
    rng = np.random.default_rng(seed)
    scores = rng.integers(0, 4, n).astype(float)  # plenty of ties
    effort = rng.integers(1, 50, n).astype(float)
    labels = (rng.random(n) < 0.4).astype(float)
    labels[rng.integers(n)] = 1
    got = effort_metrics(scores, effort, labels)
    ref = oracle_walk(scores.tolist(), effort.tolist(), labels.tolist())
    assert got[0] == pytest.approx(ref[0]) and got[1] == ref[1] and got[2] == pytest.approx(ref[2])
    assert 0 <= got[0] <= 1 and 0 <= got[1] <= n - labels.sum()


def test_ranking_ties():
    assert rank_for_inspection([1, 1, 1], [5, 2, 2]).tolist() == [1, 2, 0]


def test_effort_errors():
    with pytest.raises(NoDefects):
        effort_metrics([0.5, 0.4], [1, 1], [0, 0])
    with pytest.raises(ZeroEffort):
        effort_metrics([0.5, 0.4], [0, 0], [1, 0])
    with pytest.raises(LengthMismatch):
        effort_metrics([0.5], [1, 1], [1, 0])


def test_confusion():
    assert confusion_metrics([1, 1, 0, 0], [1, 0, 1, 0]) == (0.5, 0.5, 0.5)
    assert confusion_metrics([0, 0], [0, 0]) == (0.0, 0.0, 0.0)
    with pytest.raises(LengthMismatch):
        confusion_metrics([1], [1, 0])


def test_mre_examples():
    assert mre(10, 10) == 0.0
    assert mre(15, 10) == 0.5
    assert mre(3, 0) == 3.0
    assert mre([1, 2], [1, 4]).tolist() == [0.0, 0.5]


def test_goal_vector_shape():
    g = classification_goals(1, 0, 1, 0.3, 0)
    assert g.weights == (1, -1, 1, 1, -1) and g.names[3] == "popt20"
    with pytest.raises(GoalMismatch):
        GoalVector((1.0,), (1, -1), ("a", "b"))
    with pytest.raises(GoalMismatch):
        GoalVector((1.0,), (2,), ("a",))


def test_perfect_classifier():
    labels = np.array([1, 0, 0, 1, 0])
    loc = np.array([10, 20, 30, 40, 50])
    g = score_classifier(labels.astype(float), labels, loc)
    popt, _, _ = effort_metrics(labels, loc, labels)
    assert g.values == (1.0, 0.0, 1.0, popt, 0.0)


class _Const:
    def __init__(self, v):
        self.v = v

    def predict_value(self, X):
        return np.full(len(X), self.v)


def test_regression_score():
    t = make_table(np.zeros((3, 2)), [4.0, 4.0, 4.0], task=REGRESSION)
    assert score_model(_Const(4.0), t).values == (0.0,)
    assert score_model(_Const(6.0), t).values == (0.5,)


def test_report_units():
    assert report_value("recall", 0.84) == pytest.approx(84.0)
    assert report_value("ifa", 3) == 3
    assert report_value("mre", 0.2) == 0.2
