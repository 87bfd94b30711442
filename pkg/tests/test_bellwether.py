import math

import numpy as np
import pytest

from generalbw.bellwether import (
    ModelCache, aggregate, apply_index, bellwether0, budget_for_tree, cluster_key,
    comparison_budget, general, loss, loss_counts, normalize_goals, parse_cluster_key,
    pick_winner, tournament, worse, BellwetherMap,
)
from generalbw.cluster import build_tree
from generalbw.data import summarize
from generalbw.errors import EmptyCluster, GoalMismatch, InconsistentSizes, LevelOutOfRange
from generalbw.learn import ForestParams
from generalbw.metrics import GoalVector, classification_goals
from generalbw.pipeline import PipelineConfig
from generalbw.synth import grouped_defect_corpus

SMALL = PipelineConfig(forest=ForestParams(n_trees=20))


def gv(values, weights):
    return GoalVector(tuple(values), tuple(weights), tuple(f"g{i}" for i in range(len(values))))


def oracle_loss(x, y, w):
    n = len(x)
    total = 0.0
    for j in range(n):
        total -= math.exp(w[j] * (x[j] - y[j]) / n) / n
    return total


# --------------------------------------------------------------------- loss

def test_loss_equal_vectors():
    x = gv([0.3, 0.7, 0.1], [1, -1, 1])
    assert loss(x, x) == pytest.approx(-1.0)
    assert not worse(x, x)


def test_loss_single_goal():
    x, y = gv([0.0], [1]), gv([1.0], [1])
    assert loss(x, y) == pytest.approx(-math.exp(-1))
    assert loss(y, x) == pytest.approx(-math.e)
    assert worse(x, y) and not worse(y, x)


def test_loss_two_goal_oracle():
    x, y = gv([1, 0], [1, -1]), gv([0, 1], [1, -1])
    assert loss(x, y) == pytest.approx(oracle_loss([1, 0], [0, 1], [1, -1]), abs=1e-15)
    assert loss(y, x) == pytest.approx(oracle_loss([0, 1], [1, 0], [1, -1]), abs=1e-15)


def test_loss_random_oracle_and_antisymmetry():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = rng.integers(1, 7)
        w = rng.choice([-1, 1], n)
        a, b = rng.random(n), rng.random(n)
        x, y = gv(a, w), gv(b, w)
        assert loss(x, y) == pytest.approx(oracle_loss(a, b, w), abs=1e-14)
        if loss(x, y) != loss(y, x):
            assert worse(x, y) != worse(y, x)


def test_loss_mismatch():
    with pytest.raises(GoalMismatch):
        loss(gv([1], [1]), gv([1, 2], [1, 1]))


def test_normalize_and_aggregate():
    a, b, c = gv([0, 5], [1, 1]), gv([10, 5], [1, 1]), gv([5, 5], [1, 1])
    z = normalize_goals([a, b, c])
    assert [v.values for v in z] == [(0.0, 0.0), (1.0, 0.0), (0.5, 0.0)]
    assert aggregate([a, b, c]).values == (5.0, 5.0)
    with pytest.raises(EmptyCluster):
        aggregate([])


def test_loss_counts_and_ties():
    strong = classification_goals(0.9, 0.1, 0.9, 0.5, 1)
    weak = classification_goals(0.2, 0.6, 0.3, 0.2, 9)
    counts = loss_counts({"a": weak, "b": strong, "c": weak})
    assert counts == {"a": 1, "b": 0, "c": 1}
    assert pick_winner({"z": 0, "a": 0, "m": 1}) == "a"


# --------------------------------------------------------------------- tournaments

def test_single_candidate():
    tabs, _ = grouped_defect_corpus(1, 1, rows=80, seed=0)
    r = tournament(tabs, SMALL)
    assert r.winner == tabs[0].project_id and r.comparisons_made == 0


def test_comparisons_are_c_times_c_minus_one():
    tabs, _ = grouped_defect_corpus(2, 5, rows=60, seed=1)
    r = tournament(tabs, PipelineConfig(forest=ForestParams(n_trees=5)))
    assert r.comparisons_made == 90
    assert len(r.per_target) <= 90 and not r.disqualified


def test_planted_candidate_wins():
    wins = 0
    for s in range(20):
        tabs, planted = grouped_defect_corpus(1, 3, seed=s, plant=True)
        wins += tournament(tabs, SMALL, seed=s).winner == planted[0]
    assert wins >= 18


def test_tournament_is_order_independent():
    tabs, _ = grouped_defect_corpus(1, 4, rows=80, seed=2)
    a = tournament(tabs, SMALL, seed=5)
    b = tournament(tabs[::-1], SMALL, seed=5)
    assert a.winner == b.winner and a.pairwise_losses == b.pairwise_losses


def test_cache_shares_models():
    tabs, _ = grouped_defect_corpus(1, 4, rows=60, seed=3)
    cache = ModelCache(SMALL, 0)
    tournament(tabs[:3], SMALL, cache=cache)
    tournament(tabs[1:], SMALL, cache=cache)
    assert cache.trainings == 4


def test_failed_source_is_disqualified():
    tabs, _ = grouped_defect_corpus(1, 3, rows=60, seed=4)
    bad = tabs[0].take(np.flatnonzero(tabs[0].labels == 0)[:20])
    r = tournament([bad, *tabs[1:]], SMALL)
    assert bad.project_id in r.disqualified and r.winner != bad.project_id
    with pytest.raises(EmptyCluster):
        tournament([bad], SMALL)


# --------------------------------------------------------------------- hierarchy

@pytest.fixture(scope="module")
def two_group():
    tabs, planted = grouped_defect_corpus(2, 4, seed=3, plant=True)
    tree = build_tree([summarize(t) for t in tabs])
    projects = {t.project_id: t for t in tabs}
    return tabs, planted, tree, projects, general(tree, projects, SMALL, seed=0)


def test_general_two_leaves(two_group):
    _, planted, tree, _, bmap = two_group
    assert tree.depth == 1 and len(tree.cluster_ids(1)) == 2
    assert sorted(bmap.levels[1].values()) == sorted(planted.values())
    assert bmap.levels[0][()] in planted.values()


def test_budget_matches_counted(two_group):
    _, _, tree, _, bmap = two_group
    b = budget_for_tree(tree)
    assert b.total == bmap.total_comparisons == 4 * 3 * 2 + 2
    assert b.flat == 8 * 7


def test_single_leaf_reduces_to_flat():
    tabs, _ = grouped_defect_corpus(1, 5, rows=80, seed=6)
    tree = build_tree([summarize(t) for t in tabs], threshold=100.0)
    assert len(tree.cluster_ids(tree.depth)) == 1
    bmap = general(tree, {t.project_id: t for t in tabs}, SMALL, seed=2)
    flat = bellwether0(tabs, SMALL, seed=2)
    assert bmap.levels[0][()] == flat.winner
    assert bmap.total_comparisons == flat.comparisons_made == budget_for_tree(tree).total


def test_budget_formula():
    assert comparison_budget(100, [100]).total == 9900
    b = comparison_budget(100, [10] * 10)
    assert (b.leaf_comparisons, b.promotion_comparisons, b.total, b.flat) == (900, 90, 990, 9900)
    with pytest.raises(InconsistentSizes):
        comparison_budget(99, [10] * 10)


def test_apply_index(two_group):
    tabs, _, tree, _, bmap = two_group
    root = apply_index(tree, bmap, 0, tabs[0])
    assert root.cluster_id == () and root.project_id == bmap.levels[0][()]
    for t in tabs:
        r = apply_index(tree, bmap, 1, t)
        assert t.project_id in tree.members(r.cluster_id)
        assert r.predictions.shape == (t.n_rows,)
    with pytest.raises(LevelOutOfRange):
        apply_index(tree, bmap, 5, tabs[0])


def test_manifest_round_trip(two_group):
    _, _, _, _, bmap = two_group
    back = BellwetherMap.from_manifest(bmap.to_manifest(), bmap.models)
    assert back.levels == bmap.levels and back.comparisons == bmap.comparisons
    assert parse_cluster_key(cluster_key((0, 3))) == (0, 3) and cluster_key(()) == "r"


def test_winner_invariant_to_rescaling_a_goal():
    rng = np.random.default_rng(8)
    for _ in range(30):
        vecs = {f"c{i}": classification_goals(*rng.random(4), rng.integers(0, 20)) for i in range(6)}
        scaled = {k: v.with_values(np.array(v.values) * [1, 1, 1, 1, 1000.0] + [0, 0, 0, 0, 7.0])
                  for k, v in vecs.items()}
        assert pick_winner(loss_counts(vecs)) == pick_winner(loss_counts(scaled))


def test_winners_belong_to_their_clusters(two_group):
    _, _, tree, _, bmap = two_group
    for lv, winners in bmap.levels.items():
        for cid, pid in winners.items():
            assert pid in tree.members(cid)
