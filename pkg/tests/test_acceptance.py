"""Acceptance suite: one PASS/FAIL line per criterion, printed at the end of the run.

Set GENERALBW_DEFECT_CORPUS to a directory of defect CSVs to run criterion 11
on real data; otherwise a synthetic corpus in the same format stands in.
"""
import csv
import math
import os
import time

import numpy as np
import pytest

from generalbw import cli
from generalbw.bellwether import (
    bellwether0, budget_for_tree, general, loss, tournament, worse,
)
from generalbw.cluster import CFEntry, build_tree, cf_radius, iter_nodes
from generalbw.data import SummaryVector, concat_tables, summarize
from generalbw.errors import LeakageError
from generalbw.learn import ForestParams, de_tune, fit_forest, fit_regressor, TreeParams
from generalbw.metrics import GoalVector, confusion_metrics, effort_metrics, mre
from generalbw.pipeline import PipelineConfig
from generalbw.prep import abs_correlations, cfs_select, merit, smote
from generalbw.rig import LeakageGuard, RigConfig, comparison_sweep, run_rig
from generalbw.stats import TreatmentSamples, scott_knott
from generalbw.synth import (
    grouped_defect_corpus, health_corpus, write_defect_corpus, write_health_corpus,
)

from conftest import ACCEPTANCE, make_table


def verdict(n, ok, detail):
    ACCEPTANCE.append(f"criterion {n} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


# --------------------------------------------------------------------- 1

def _term_by_term(x, y, w):
    n = len(x)
    s = 0.0
    for j in range(n):
        s += -math.exp(w[j] * (x[j] - y[j]) / n) / n
    return s


def test_criterion_1_loss_oracle():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst, irreflexive = 0.0, True
    for i in range(1000):
        n = (1, 2, 5)[i % 3]
        w = rng.choice([-1, 1], n)
        # tournaments feed min-max scaled goals, so both operands live in [0, 1]
        a, b = rng.random(n), rng.random(n)
        x = GoalVector(tuple(a), tuple(w), tuple(f"g{j}" for j in range(n)))
        y = GoalVector(tuple(b), tuple(w), tuple(f"g{j}" for j in range(n)))
        lxy, lyx = _term_by_term(a, b, w), _term_by_term(b, a, w)
        worst = max(worst, abs(loss(x, y) - lxy), abs(loss(y, x) - lyx))
        if worse(x, y) != (lxy > lyx) and abs(lxy - lyx) > 1e-12:
            worst = max(worst, 1.0)
        irreflexive &= not worse(x, x) and not worse(y, y)
    dt = time.perf_counter() - t0
    verdict(1, worst <= 1e-12 and irreflexive and dt < 1.0,
            f"max |loss - oracle| = {worst:.2e}, worse(x,x) never true: {irreflexive}, {dt:.2f}s")


# --------------------------------------------------------------------- 2

def test_criterion_2_comparison_budget():
    t0 = time.perf_counter()
    corpora = {N: grouped_defect_corpus(N // 15, 15, rows=200, seed=N)[0] for N in (45, 90, 180, 360, 720)}
    cfg = PipelineConfig(forest=ForestParams(n_trees=10))
    rows = comparison_sweep(corpora, cfg, seed=0)
    sizes = []
    for tables in corpora.values():
        tree = build_tree([summarize(t) for t in tables])
        sizes += [len(tree.members(c)) for c in tree.cluster_ids(tree.depth)]
    exact = all(r["general_counted"] == r["general_budget"] for r in rows)
    at720 = next(r for r in rows if r["N"] == 720)
    dt = time.perf_counter() - t0
    ok = exact and at720["ratio"] < 0.15 and dt < 600
    counts = ", ".join(f"N={r['N']}:{r['general_counted']}" for r in rows)
    verdict(2, ok, f"counted == budget on all sizes: {exact} ({counts}); N=720 ratio "
                   f"{at720['ratio']:.4f} < 0.15; leaf sizes {min(sizes)}-{max(sizes)}; {dt:.0f}s")


# --------------------------------------------------------------------- 3

def test_criterion_3_reduction_identity():
    cfg = PipelineConfig(forest=ForestParams(n_trees=20))
    failures = []
    for seed in range(10):
        tabs, _ = grouped_defect_corpus(2, 4, rows=120, seed=seed)
        tree = build_tree([summarize(t) for t in tabs], threshold=100.0)
        assert len(tree.cluster_ids(tree.depth)) == 1
        bmap = general(tree, {t.project_id: t for t in tabs}, cfg, seed=seed)
        flat = bellwether0(tabs, cfg, seed=seed)
        leaf = bmap.tournaments[(tree.depth, tree.cluster_ids(tree.depth)[0])]
        same = (bmap.levels[0][()] == flat.winner
                and bmap.total_comparisons == flat.comparisons_made
                and leaf.per_target.keys() == flat.per_target.keys()
                and all(leaf.per_target[k].values == flat.per_target[k].values for k in flat.per_target)
                and all(leaf.per_candidate[k].values == flat.per_candidate[k].values
                        for k in flat.per_candidate))
        if not same:
            failures.append(seed)
    verdict(3, not failures, f"single-leaf trees: winner, count and per-project scores equal in "
                             f"{10 - len(failures)}/10 seeds")


# --------------------------------------------------------------------- 4

def test_criterion_4_planted_recovery():
    t0 = time.perf_counter()
    cfg = PipelineConfig()
    hits = total = 0
    for seed in range(20):
        tabs, planted = grouped_defect_corpus(4, 4, seed=seed, plant=True)
        tree = build_tree([summarize(t) for t in tabs])
        for cid in tree.cluster_ids(tree.depth):
            members = tree.members(cid)
            total += 1
            if len(members) < 2:
                continue
            r = tournament([t for t in tabs if t.project_id in members], cfg, seed=seed)
            hits += r.winner in planted.values() and r.winner in members
    dt = time.perf_counter() - t0
    rate = hits / total
    verdict(4, rate >= 0.9 and dt < 300,
            f"planted project won {hits}/{total} leaf tournaments ({rate:.0%}), {dt:.0f}s")


# --------------------------------------------------------------------- 5

def test_criterion_5_metric_oracles():
    checks = []
    popt, ifa, r20 = effort_metrics([0.9, 0.8, 0.7, 0.6], [10, 10, 10, 70], [0, 1, 0, 1])
    checks.append(popt == 0.5 and ifa == 1 and r20 == 0.5)
    checks.append(effort_metrics([0.9, 0.1], [5, 5], [1, 0])[1] == 0)
    rec, prec, fa = confusion_metrics([1, 1, 0, 0, 1], [1, 0, 1, 0, 1])
    checks.append(abs(rec - 2 / 3) < 1e-12 and abs(prec - 2 / 3) < 1e-12 and abs(fa - 0.5) < 1e-12)
    checks.append(mre(10, 10) == 0 and abs(mre(15, 10) - 0.5) < 1e-12 and mre(3, 0) == 3.0)
    rng = np.random.default_rng(5)
    inv = True
    for _ in range(50):
        s, e = rng.random(40), rng.integers(1, 500, 40).astype(float)
        t = (rng.random(40) < 0.3).astype(float)
        t[0] = 1
        inv &= effort_metrics(s, e, t) == effort_metrics(s, e * 1000, t)
    checks.append(inv)
    verdict(5, all(checks), f"worked examples {sum(checks[:4])}/4 exact, LOC x1000 invariance: {inv}")


# --------------------------------------------------------------------- 6

def test_criterion_6_birch_invariants():
    rng = np.random.default_rng(6)
    n, d = 20, 8
    X = np.vstack([rng.normal(0, 0.01, (n, d)), rng.normal(0, 0.01, (n, d)) + 1.0])
    V = [SummaryVector(f"g{i // n}_{i % n:02d}", x) for i, x in enumerate(X)]
    truth = sorted([sorted(v.project_id for v in V[:n]), sorted(v.project_id for v in V[n:])])
    add_err, max_r, partition, stable = 0.0, 0.0, True, 0
    for order in range(10):
        perm = np.random.default_rng(order).permutation(len(V))
        tree = build_tree([V[i] for i in perm])
        Z = {v.project_id: tree.normalize(v.values) for v in V}
        for node in iter_nodes(tree):
            for s in node.entries:
                pts = np.array([Z[m] for m in _slot_members(s)])
                ref = CFEntry.from_points(pts)
                add_err = max(add_err, float(np.max(np.abs(ref.linear_sum - s.cf.linear_sum))),
                              abs(ref.square_sum - s.cf.square_sum))
        for slot in tree.leaf_slots():
            max_r = max(max_r, cf_radius(slot.cf))
        members = [m for c in tree.leaf_clusters() for m in c]
        partition &= sorted(members) == sorted(v.project_id for v in V)
        stable += sorted(sorted(c) for c in tree.leaf_clusters()) == truth
    ok = add_err <= 1e-9 and max_r <= 0.5 + 1e-12 and partition and stable == 10
    verdict(6, ok, f"CF additivity err {add_err:.1e}, max leaf radius {max_r:.3f}, "
                   f"partition exact: {partition}, two groups recovered in {stable}/10 orders")


def _slot_members(slot):
    if slot.child is None:
        return list(slot.members)
    return [m for s in slot.child.entries for m in _slot_members(s)]


# --------------------------------------------------------------------- 7

def sphere(p):
    return p["x"] ** 2 + p["y"] ** 2


def test_criterion_7_learners_and_tuner():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(200, 6))
    y = (X[:, 0] - X[:, 3] + 0.3 * rng.normal(size=200) > 0).astype(float)
    m = fit_forest(X, y, ForestParams(n_trees=25), seed=1)
    P = rng.normal(size=(100, 6))
    mean_ok = np.allclose(m.predict_proba(P), m.tree_outputs(P).mean(axis=0), rtol=0, atol=1e-15)
    imp = m.feature_importance()
    r = fit_regressor(X, X[:, 1] * 2 + X[:, 2], TreeParams(max_depth=5))
    imp_ok = abs(imp.sum() - 1) < 1e-12 and abs(r.feature_importance().sum() - 1) < 1e-12

    bounds = {"x": (-5, 5), "y": (-5, 5)}
    # the default budget is population * (generations + 1) = 220 evaluations
    budget_hits = sum(de_tune(sphere, bounds, population=10, generations=21, seed=s).score < 1e-2
                      for s in range(20))
    default_hits = sum(de_tune(sphere, bounds, seed=s).score < 1e-2 for s in range(20))
    ok = mean_ok and imp_ok and budget_hits >= 19
    verdict(7, ok, f"forest = mean of trees on 100 probes: {mean_ok}; importances sum to 1: {imp_ok}; "
                   f"DE < 1e-2 within 220 evaluations in {budget_hits}/20 seeds "
                   f"(population 20 x 10 generations: {default_hits}/20, informational)")


# --------------------------------------------------------------------- 8

def _exhaustive_best(X, y):
    rcf, rff = abs_correlations(X, y)
    F = X.shape[1]
    best = None
    for mask in range(1, 1 << F):
        s = tuple(j for j in range(F) if mask >> j & 1)
        m = merit(s, rcf, rff)
        if best is None or m > best[0] + 1e-12 or (abs(m - best[0]) <= 1e-12 and len(s) < len(best[1])):
            best = (m, s)
    return best


def _on_segment(p, a, b, tol=1e-9):
    d = b - a
    dd = float(d @ d)
    if dd == 0:
        return np.allclose(p, a, atol=tol)
    u = float((p - a) @ d) / dd
    return -tol <= u <= 1 + tol and np.allclose(a + u * d, p, atol=tol)


def test_criterion_8_smote_and_cfs():
    balance = collinear = True
    for seed in range(10):
        rng = np.random.default_rng(seed)
        n_min = int(rng.integers(2, 15))
        Xmin = rng.normal(3, 1, (n_min, 4))
        X = np.vstack([rng.normal(size=(60, 4)), Xmin])
        t = make_table(X, np.r_[np.zeros(60), np.ones(n_min)])
        out = smote(t, k=5, seed=seed)
        balance &= out.class_counts() == (60, 60)
        kk = min(5, n_min - 1)
        for s, x in enumerate(out.rows[t.n_rows:]):
            i = s % n_min
            d = np.sum((Xmin - Xmin[i]) ** 2, axis=1)
            d[i] = np.inf
            nb = np.argsort(d, kind="stable")[:kk]
            collinear &= any(_on_segment(x, Xmin[i], Xmin[j]) for j in nb)

    cfs_ok = True
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        yy = (rng.random(200) < 0.4).astype(float)
        rel = yy + 0.5 * rng.normal(size=200)
        X3 = np.column_stack([rel, rng.normal(size=200), rel])
        got = cfs_select(make_table(X3, yy)).selected
        oracle = _exhaustive_best(X3, yy)[1]
        cfs_ok &= got == oracle == (0,)
    verdict(8, balance and collinear and cfs_ok,
            f"balance exact: {balance}; synthetic points on parent-neighbour segments: {collinear}; "
            f"CFS picks the relevant feature, drops its duplicate, matches exhaustive oracle: {cfs_ok}")


# --------------------------------------------------------------------- 9

def _three(seed, locs):
    rng = np.random.default_rng(seed)
    return [TreatmentSamples(n, tuple(rng.normal(loc, 0.1, 30))) for n, loc in zip("abc", locs)]


def test_criterion_9_scott_knott():
    sep = sum(scott_knott(_three(s, (0, 10, 20)), seed=s) == {"a": 1, "b": 2, "c": 3} for s in range(20))
    same = sum(set(scott_knott(_three(s, (0, 0, 0)), seed=s).values()) == {1} for s in range(20))
    long_run = np.mean([set(scott_knott(_three(s, (0, 0, 0)), seed=s).values()) == {1}
                        for s in range(1000, 1400)])
    verdict(9, sep == 20 and same >= 19,
            f"separated -> 1,2,3 in {sep}/20 seeds; identical -> single rank in {same}/20 seeds "
            f"(seeds 1000-1399: {long_run:.1%}, informational)")


# --------------------------------------------------------------------- 10

def test_criterion_10_determinism_and_leakage(tmp_path):
    tabs, _ = grouped_defect_corpus(3, 8, rows=150, seed=10, plant=True)
    write_defect_corpus(tabs, tmp_path / "defect")
    write_health_corpus(health_corpus(15, months=36, seed=10), tmp_path / "health")
    runs = {}
    fired = None
    checks = 0
    try:
        for name, cfg in (
            ("defect", RigConfig(corpus=str(tmp_path / "defect"), repeats=10, n_trees=20, seed=4)),
            ("health", RigConfig(corpus=str(tmp_path / "health"), task="health", goal="MC",
                                 repeats=3, seed=4)),
        ):
            for k in (0, 1):
                out = tmp_path / f"{name}_{k}"
                rep = run_rig(RigConfig(**{**cfg.to_dict(), "out": str(out)}))
                checks += rep.leakage_checks
                runs[(name, k)] = (out / "results.csv").read_bytes()
    except LeakageError as exc:
        fired = str(exc)
    identical = fired is None and all(runs[(n, 0)] == runs[(n, 1)] for n in ("defect", "health"))

    # positive control: the guard does fire on a planted leak
    g = LeakageGuard()
    g.hold_out(tabs[0].take(np.arange(5)))
    try:
        g(concat_tables([tabs[1], tabs[0].take(np.arange(3))], "leaky"))
        live = False
    except LeakageError:
        live = True
    verdict(10, identical and fired is None and checks > 0 and live,
            f"results.csv byte-identical across reruns: {identical}; leakage fired: {fired or 'never'} "
            f"over {checks} training tables; guard catches a planted leak: {live}")


# --------------------------------------------------------------------- 11

def test_criterion_11_rank_tables(tmp_path):
    user = os.environ.get("GENERALBW_DEFECT_CORPUS")
    if user:
        corpus, source = user, f"user corpus {user}"
    else:
        tabs, _ = grouped_defect_corpus(3, 8, rows=150, seed=11, plant=True)
        corpus, source = str(write_defect_corpus(tabs, tmp_path / "corpus")), "synthetic stand-in corpus"
    out = tmp_path / "out"
    code = cli.main(["rig", "--corpus", corpus, "--repeats", "3", "--n-trees", "20", "--seed", "1",
                     "--out", str(out)])
    crits = ("recall", "false_alarm", "precision", "popt20", "ifa")
    populated = []
    if code == 0:
        with open(out / "ranks.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        for c in crits:
            r = [x for x in rows if x["criterion"] == c and x["treatment"] == "general_0"]
            if r and r[0]["rank"].isdigit() and all(np.isfinite(float(r[0][k])) for k in ("median", "iqr")):
                populated.append(c)
        text = (out / "ranks.txt").read_text()
        layout = all(f"{c} (rank 1 is" in text for c in crits) and "treatment" in text
    else:
        layout = False
    verdict(11, code == 0 and len(populated) == 5 and layout,
            f"{source}: rank/treatment/median/IQR tables written, general_0 populated for "
            f"{len(populated)}/5 criteria")
