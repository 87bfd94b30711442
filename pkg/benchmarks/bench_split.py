"""Compare the compiled and numpy kernels on split search, forest fit and prediction.

    python3 benchmarks/bench_split.py [--rows 200] [--features 20] [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from generalbw.learn import _split_py
from generalbw.learn.forest import ForestParams, fit_forest

try:
    from generalbw.learn import _split_ext
except ImportError:
    _split_ext = None


def _forest_with(kernel_mod, X, y, n_trees):
    from generalbw.learn import _kernels
    saved = _kernels.best_split, _kernels.predict_packed
    _kernels.best_split, _kernels.predict_packed = kernel_mod.best_split, kernel_mod.predict_packed
    try:
        model = fit_forest(X, y, ForestParams(n_trees=n_trees), seed=0)
        return model, model.predict_proba(X)
    finally:
        _kernels.best_split, _kernels.predict_packed = saved


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=200)
    ap.add_argument("--features", type=int, default=20)
    ap.add_argument("--trees", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    X = rng.normal(size=(args.rows, args.features))
    y = (X[:, 0] + 0.5 * rng.normal(size=args.rows) > 0).astype(float)
    feats = np.arange(args.features, dtype=np.int64)
    backends = [("numpy", _split_py)] + ([("cython", _split_ext)] if _split_ext else [])
    if _split_ext is None:
        print("compiled kernel not built; timing numpy only")

    print(f"{'kernel':<8} {'split (ms)':>11} {'forest fit (s)':>15} {'predict (ms)':>13}")
    outs = {}
    for name, mod in backends:
        split = min(timeit.repeat(lambda: mod.best_split(X, y, feats, 0, 1), number=1,
                                  repeat=args.repeat)) * 1e3
        fit = min(timeit.repeat(lambda: _forest_with(mod, X, y, args.trees), number=1, repeat=3))
        model, proba = _forest_with(mod, X, y, args.trees)
        Z = np.ascontiguousarray(X)
        pred = min(timeit.repeat(lambda: mod.predict_packed(*model._packed, Z), number=1,
                                 repeat=args.repeat)) * 1e3
        outs[name] = (mod.best_split(X, y, feats, 0, 1), proba)
        print(f"{name:<8} {split:>11.3f} {fit:>15.3f} {pred:>13.3f}")
    if len(outs) == 2:
        (s0, p0), (s1, p1) = outs.values()
        print("identical results:", s0 == s1 and np.array_equal(p0, p1))


if __name__ == "__main__":
    main()
