"""Command-line entry point: ``generalbw <command> ...``.

Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .errors import ValidationError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_seed(p):
    p.add_argument("--seed", type=int, help="root random seed (default 0)")


def _add_task(p):
    p.add_argument("--task", choices=("defect", "health"), help="case study (default defect)")
    p.add_argument("--goal", help="health goal metric (default MC)")
    p.add_argument("--horizon", type=int, help="health forecast horizon in months (default 6)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="generalbw", description="Hierarchical bellwether transfer learning.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser, metavar="command")
    sub.required = True

    p = sub.add_parser("check", help="run the project sanity checks on meta.csv")
    p.add_argument("corpus")
    p.add_argument("--meta", help="metadata file (default <corpus>/meta.csv)")

    p = sub.add_parser("summarize", help="per-project median feature vectors")
    p.add_argument("corpus")
    _add_task(p)
    p.add_argument("--out", help="write CSV here instead of stdout")

    p = sub.add_parser("cluster", help="build the CF-tree over a corpus")
    p.add_argument("corpus")
    _add_task(p)
    p.add_argument("--branching", type=int, default=20)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", help="save the tree as JSON")

    p = sub.add_parser("bellwether", help="find bellwethers over a whole corpus")
    p.add_argument("corpus")
    _add_task(p)
    _add_seed(p)
    p.add_argument("--flat", action="store_true", help="single flat tournament only")
    p.add_argument("--branching", type=int, default=20)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--out", help="write a bundle directory usable by 'predict'")

    p = sub.add_parser("rig", help="run the repeated experiment rig")
    p.add_argument("--config", help="JSON file with rig settings; flags override it")
    p.add_argument("--corpus")
    _add_task(p)
    _add_seed(p)
    p.add_argument("--repeats", type=int)
    p.add_argument("--levels", help="comma-separated tree levels to evaluate (default all)")
    p.add_argument("--out")
    p.add_argument("--n-trees", type=int)
    p.add_argument("--branching", type=int)
    p.add_argument("--threshold", type=float)
    de = p.add_mutually_exclusive_group()
    de.add_argument("--de", dest="de_enabled", action="store_const", const=True)
    de.add_argument("--no-de", dest="de_enabled", action="store_const", const=False)

    p = sub.add_parser("rank", help="Scott-Knott ranks from a results.csv")
    p.add_argument("results")
    p.add_argument("--task", choices=("defect", "health"), default="defect")
    _add_seed(p)
    p.add_argument("--out", help="also write ranks CSV here")

    p = sub.add_parser("report", help="feature importance x/y table for a bundle")
    p.add_argument("bundle")
    p.add_argument("corpus", help="projects whose own models give the y values")
    _add_seed(p)
    p.add_argument("--level", type=int, default=0)
    p.add_argument("--out", help="write CSV here instead of stdout")

    p = sub.add_parser("predict", help="route a new project through a bundle and predict")
    p.add_argument("bundle")
    p.add_argument("project", help="project CSV file")
    p.add_argument("--level", type=int, default=0)

    p = sub.add_parser("synth", help="write a synthetic corpus")
    p.add_argument("out")
    p.add_argument("--task", choices=("defect", "health"), default="defect")
    p.add_argument("--groups", type=int, default=3)
    p.add_argument("--group-size", type=int, default=10)
    p.add_argument("--rows", type=int, default=200)
    p.add_argument("--months", type=int, default=36)
    p.add_argument("--plant", action="store_true", help="plant one bellwether per group")
    _add_seed(p)
    return ap


# --------------------------------------------------------------------------- helpers

def _seed(args) -> int:
    return 0 if getattr(args, "seed", None) is None else args.seed


def _load_projects(args):
    from .data import DEFECT_SCHEMA, load_corpus, load_health_corpus

    if (args.task or "defect") == "defect":
        return load_corpus(args.corpus, DEFECT_SCHEMA)
    return load_health_corpus(args.corpus, args.goal or "MC", args.horizon or 6)


def _pipeline(args, n_trees=100):
    from .learn import ForestParams
    from .pipeline import PipelineConfig

    task = "classification" if (args.task or "defect") == "defect" else "regression"
    return PipelineConfig(task=task, forest=ForestParams(n_trees=n_trees))


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------- commands

def cmd_check(args) -> int:
    from .data import corpus_project_files, load_meta, sanity_check

    meta_path = Path(args.meta) if args.meta else Path(args.corpus) / "meta.csv"
    if not meta_path.exists():
        raise ValidationError(f"{meta_path}: no metadata file")
    metas = load_meta(meta_path)
    ids = [p.stem for p in corpus_project_files(args.corpus)]
    bad = 0
    for pid in ids:
        if pid not in metas:
            print(f"{pid}\tFAIL\tno metadata row")
            bad += 1
            continue
        res = sanity_check(metas[pid])
        if res.passed:
            print(f"{pid}\tpass")
        else:
            bad += 1
            print(f"{pid}\tFAIL\t" + "; ".join(res.messages()))
    print(f"{len(ids) - bad}/{len(ids)} projects pass")
    return EXIT_OK if bad == 0 else EXIT_INVALID


def cmd_summarize(args) -> int:
    import io

    from .data import summarize

    projects = _load_projects(args)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["project_id", *projects[0].schema.feature_names])
    for p in projects:
        w.writerow([p.project_id, *(repr(float(v)) for v in summarize(p).values)])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_cluster(args) -> int:
    from .bellwether import budget_for_tree, cluster_key
    from .cluster import build_tree, save_tree
    from .data import summarize

    projects = _load_projects(args)
    tree = build_tree([summarize(p) for p in projects], args.branching, args.threshold)
    print(f"projects {tree.n_projects}  depth {tree.depth}  leaves {len(tree.cluster_ids(tree.depth))}")
    for cid in tree.cluster_ids(tree.depth):
        print(f"{cluster_key(cid)}\t{' '.join(tree.members(cid))}")
    b = budget_for_tree(tree)
    print(f"comparisons: hierarchical {b.total}, flat {b.flat}")
    if args.out:
        save_tree(tree, args.out)
    return EXIT_OK


def cmd_bellwether(args) -> int:
    from .bellwether import ModelCache, bellwether0, cluster_key, general
    from .cluster import build_tree
    from .data import summarize
    from .rig import RigConfig, write_bundle

    projects = _load_projects(args)
    cfg = _pipeline(args, args.n_trees)
    seed = _seed(args)
    cache = ModelCache(cfg, seed)
    if args.flat:
        r = bellwether0(projects, cfg, seed, cache)
        print(f"bellwether {r.winner}  comparisons {r.comparisons_made}")
        for pid in sorted(r.disqualified):
            print(f"disqualified {pid}: {r.disqualified[pid]}")
        return EXIT_OK
    tree = build_tree([summarize(p) for p in projects], args.branching, args.threshold)
    bmap = general(tree, {p.project_id: p for p in projects}, cfg, seed, cache)
    for lv in sorted(bmap.levels):
        for cid, pid in sorted(bmap.levels[lv].items()):
            print(f"level {lv}\t{cluster_key(cid)}\t{pid}")
    print(f"comparisons {bmap.total_comparisons} (flat would need {len(projects) * (len(projects) - 1)})")
    if args.out:
        rc = RigConfig(corpus=args.corpus, task=args.task or "defect", goal=args.goal or "MC",
                       seed=seed, branching=args.branching, threshold=args.threshold,
                       n_trees=args.n_trees, horizon=args.horizon or 6)
        write_bundle(args.out, tree, bmap, rc, seed, 0)
        print(f"bundle written to {args.out}")
    return EXIT_OK


def _rig_config(args):
    from .rig import RigConfig

    base = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                base = json.load(fh)
        except FileNotFoundError:
            raise ValidationError(f"{args.config}: config file not found") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(base, dict):
            raise ValidationError(f"{args.config}: expected a JSON object")
    flags = {
        "corpus": args.corpus, "task": args.task, "goal": args.goal, "horizon": args.horizon,
        "seed": args.seed, "repeats": args.repeats, "out": args.out, "n_trees": args.n_trees,
        "branching": args.branching, "threshold": args.threshold, "de_enabled": args.de_enabled,
    }
    if args.levels is not None:
        try:
            flags["levels"] = [int(v) for v in args.levels.split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"--levels: expected comma-separated integers, got {args.levels!r}") from None
    base.update({k: v for k, v in flags.items() if v is not None})
    if not base.get("corpus"):
        raise UsageError("rig: --corpus (or 'corpus' in --config) is required")
    return RigConfig.from_dict(base)


def cmd_rig(args) -> int:
    from .rig import run_rig
    from .stats import rank_rows_text

    cfg = _rig_config(args)
    report = run_rig(cfg)
    if report.excluded:
        print(f"excluded by sanity checks: {', '.join(sorted(report.excluded))}")
    print(rank_rows_text(report.ranks))
    print(f"results in {cfg.out}")
    return EXIT_OK


def cmd_rank(args) -> int:
    from .rig import rank_results, read_results
    from .stats import rank_rows_csv, rank_rows_text

    rows = rank_results(read_results(args.results), args.task, _seed(args))
    print(rank_rows_text(rows))
    if args.out:
        Path(args.out).write_text(rank_rows_csv(rows), encoding="utf-8")
    return EXIT_OK


def cmd_report(args) -> int:
    from .data import DEFECT_SCHEMA, load_corpus, load_health_corpus
    from .pipeline import PipelineConfig, derive_seed, fit_pipeline
    from .rig import RigConfig, importance_csv, importance_report, load_bundle

    b = load_bundle(args.bundle)
    rc = RigConfig.from_dict(b.manifest["config"])
    if rc.task == "defect":
        projects = load_corpus(args.corpus, DEFECT_SCHEMA)
    else:
        projects = load_health_corpus(args.corpus, rc.goal, rc.horizon, rc.include_goal)
    cfg: PipelineConfig = rc.pipeline()
    seed = _seed(args)
    selfs = []
    for p in projects:
        try:
            selfs.append(fit_pipeline(p, cfg, derive_seed(seed, "self", p.project_id)))
        except ValidationError as exc:
            print(f"skipping {p.project_id}: {exc}", file=sys.stderr)
    rows = importance_report(b.bmap.model(args.level, ()) if args.level == 0 else
                             _only_model(b, args.level), selfs)
    _emit(importance_csv(rows), args.out)
    return EXIT_OK


def _only_model(b, level):
    entries = b.bmap.levels.get(level)
    if not entries:
        raise ValidationError(f"level {level} is not populated in this bundle")
    if len(entries) != 1:
        raise ValidationError(f"level {level} has {len(entries)} bellwethers; report uses a single model")
    return b.bmap.models[next(iter(entries.values()))]


def cmd_predict(args) -> int:
    from .bellwether import apply_index, cluster_key
    from .data import DEFECT_SCHEMA, build_health_instances, health_schema, load_health_series, load_project_table
    from .rig import load_bundle

    b = load_bundle(args.bundle)
    task = b.manifest["task"]
    if task == "defect":
        table = load_project_table(args.project, DEFECT_SCHEMA)
    else:
        cfg = b.manifest["config"]
        _, series = load_health_series(args.project)
        table = build_health_instances(series, cfg.get("horizon", 6), b.manifest["goal"],
                                       Path(args.project).stem, cfg.get("include_goal", False))
    res = apply_index(b.tree, b.bmap, args.level, table)
    print(f"path {cluster_key(res.path)}")
    print(f"cluster {cluster_key(res.cluster_id)}")
    print(f"bellwether {res.project_id}")
    print("row,prediction")
    for i, v in enumerate(np.asarray(res.predictions)):
        print(f"{i},{float(v)!r}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import grouped_defect_corpus, health_corpus, write_defect_corpus, write_health_corpus

    seed = _seed(args)
    if args.task == "defect":
        tables, planted = grouped_defect_corpus(args.groups, args.group_size, args.rows, seed, args.plant)
        write_defect_corpus(tables, args.out)
        print(f"wrote {len(tables)} defect projects to {args.out}")
        for g, pid in sorted(planted.items()):
            print(f"planted group {g}: {pid}")
    else:
        series = health_corpus(args.groups * args.group_size, args.months, seed, args.groups)
        write_health_corpus(series, args.out)
        print(f"wrote {len(series)} health series to {args.out}")
    return EXIT_OK


COMMANDS = {
    "check": cmd_check, "summarize": cmd_summarize, "cluster": cmd_cluster,
    "bellwether": cmd_bellwether, "rig": cmd_rig, "rank": cmd_rank, "report": cmd_report,
    "predict": cmd_predict, "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the runtime exit code
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
