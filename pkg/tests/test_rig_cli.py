import json

import numpy as np
import pytest

from generalbw import cli
from generalbw.data import DEFECT_SCHEMA, ProjectTable, concat_tables
from generalbw.errors import LeakageError, ValidationError
from generalbw.rig import (
    LeakageGuard, RESULT_COLUMNS, ResultRow, RigConfig, importance_report, load_bundle,
    rank_results, read_results, results_csv, run_rig,
)
from generalbw.synth import (
    PASSING_META, grouped_defect_corpus, health_corpus, write_defect_corpus, write_health_corpus,
)
from generalbw.data import ProjectMeta


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    tabs, _ = grouped_defect_corpus(2, 6, rows=80, seed=7)
    meta = {t.project_id: PASSING_META for t in tabs}
    meta[tabs[-1].project_id] = ProjectMeta(0, 10, 5, 0, 1, 0, True, False)
    write_defect_corpus(tabs, root, meta)
    return root


@pytest.fixture(scope="module")
def rig_run(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("out")
    cfg = RigConfig(corpus=str(corpus), repeats=2, n_trees=5, seed=3, out=str(out))
    return cfg, run_rig(cfg), out


# --------------------------------------------------------------------- rig

def test_rig_outputs(rig_run):
    cfg, rep, out = rig_run
    for name in ("results.csv", "ranks.csv", "ranks.txt", "budget.csv", "importance.csv",
                 "timing.csv", "bundle/manifest.json"):
        assert (out / name).exists()
    assert list(rep.excluded) == ["p001_05"]
    assert {"self", "global", "bellwether0", "general_0"} <= set(rep.treatments())
    assert rep.leakage_checks > 0
    rows = read_results(out / "results.csv")
    assert {r.repeat for r in rows} == {0, 1}
    assert all(r.project != "p001_05" for r in rows)


def test_rig_is_deterministic(rig_run, corpus, tmp_path):
    cfg, _, out = rig_run
    again = RigConfig(**{**cfg.to_dict(), "out": str(tmp_path)})
    run_rig(again)
    for name in ("results.csv", "ranks.csv", "budget.csv", "importance.csv"):
        assert (out / name).read_bytes() == (tmp_path / name).read_bytes()


def test_budget_identity_in_rig(rig_run):
    _, rep, _ = rig_run
    for b in rep.budgets:
        assert b["counted"] == b["budget"]


def test_bundle_round_trip(rig_run, corpus):
    cfg, _, out = rig_run
    b = load_bundle(out / "bundle")
    assert b.manifest["config_hash"] == cfg.digest()
    assert 0 in b.bmap.levels and b.bmap.models


def test_leakage_guard():
    tabs, _ = grouped_defect_corpus(1, 1, rows=30, seed=0)
    t = tabs[0]
    g = LeakageGuard()
    g.hold_out(t.take(np.arange(10)))
    g(t.take(np.arange(10, 30)))
    with pytest.raises(LeakageError):
        g(concat_tables([t.take(np.arange(10, 30)), t.take(np.arange(5))], "mixed"))


def test_rig_health(tmp_path):
    write_health_corpus(health_corpus(10, months=30, seed=1), tmp_path / "h")
    cfg = RigConfig(corpus=str(tmp_path / "h"), task="health", goal="MC", repeats=1, seed=0,
                    out=str(tmp_path / "o"))
    cfg = RigConfig(**{**cfg.to_dict(), "de_enabled": False})
    rep = run_rig(cfg)
    assert {r.criterion for r in rep.results} == {"mre"}


def test_results_csv_round_trip(tmp_path):
    rows = [ResultRow(0, "a", "self", "recall", 0.1 + 0.2), ResultRow(0, "a", "self", "ifa", None, "failed: x")]
    p = tmp_path / "r.csv"
    p.write_text(results_csv(rows))
    assert read_results(p) == rows
    assert p.read_text().splitlines()[0] == ",".join(RESULT_COLUMNS)


def test_config_validation():
    with pytest.raises(ValidationError):
        RigConfig(repeats=0)
    with pytest.raises(ValidationError):
        RigConfig.from_dict({"bogus": 1})
    with pytest.raises(ValidationError):
        RigConfig(task="health", goal="nope")


class _Imp:
    def __init__(self, d):
        self.d = d

    def feature_importance(self):
        return self.d


def test_importance_flagging():
    rows = importance_report(_Imp({"a": 0.6, "b": 0.3, "c": 0.1, "d": 0.0}),
                             [_Imp({"a": 0.2, "b": 0.5, "c": 0.3, "d": 0.0})] * 3)
    flags = {r.feature: r.important for r in rows}
    assert flags == {"a": True, "b": False, "c": False, "d": False}
    assert rows[0].cell == "0.60/0.20"


# --------------------------------------------------------------------- cli

def test_cli_pipeline(corpus, tmp_path, capsys):
    assert cli.main(["check", str(corpus)]) == 1  # one project fails the checks
    assert cli.main(["summarize", str(corpus), "--out", str(tmp_path / "s.csv")]) == 0
    assert (tmp_path / "s.csv").read_text().startswith("project_id,")
    assert cli.main(["cluster", str(corpus), "--out", str(tmp_path / "t.json")]) == 0
    bundle = tmp_path / "b"
    assert cli.main(["bellwether", str(corpus), "--n-trees", "5", "--out", str(bundle)]) == 0
    assert cli.main(["bellwether", str(corpus), "--n-trees", "5", "--flat"]) == 0
    capsys.readouterr()
    assert cli.main(["predict", str(bundle), str(corpus / "p000_00.csv")]) == 0
    out = capsys.readouterr().out
    assert "bellwether p0" in out and "row,prediction" in out
    assert cli.main(["report", str(bundle), str(corpus), "--out", str(tmp_path / "i.csv")]) == 0


def test_cli_rig_and_rank(corpus, tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"corpus": str(corpus), "repeats": 1, "n_trees": 3}))
    out = tmp_path / "o"
    assert cli.main(["rig", "--config", str(conf), "--out", str(out), "--levels", "0"]) == 0
    assert cli.main(["rank", str(out / "results.csv"), "--out", str(tmp_path / "r.csv")]) == 0


def test_cli_synth(tmp_path):
    assert cli.main(["synth", str(tmp_path / "d"), "--groups", "2", "--group-size", "3", "--plant"]) == 0
    assert len(list((tmp_path / "d").glob("p*.csv"))) == 6
    assert cli.main(["synth", str(tmp_path / "h"), "--task", "health", "--groups", "1",
                     "--group-size", "2"]) == 0


@pytest.mark.parametrize("argv", [
    [],
    ["nosuch"],
    ["rig"],
    ["rig", "--corpus", "x", "--levels", "a,b"],
    ["cluster", "/nonexistent/corpus"],
    ["rank", "/nonexistent/results.csv"],
])
def test_cli_invalid_input_exit_1(argv, capsys):
    assert cli.main(argv) == 1


def test_cli_bad_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["rig", "--config", str(bad)]) == 1


def test_cli_runtime_failure_exit_2(monkeypatch, corpus):
    def boom(args):
        raise RuntimeError("disk on fire")
    monkeypatch.setitem(cli.COMMANDS, "summarize", boom)
    assert cli.main(["summarize", str(corpus)]) == 2
