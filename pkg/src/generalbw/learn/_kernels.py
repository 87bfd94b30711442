"""Kernel selection: compiled split search when built, numpy otherwise.

Set ``GENERALBW_PURE=1`` to force the numpy kernel.
"""
import os

from . import _split_py

BACKEND = "python"
best_split = _split_py.best_split
predict_packed = _split_py.predict_packed

if not os.environ.get("GENERALBW_PURE"):
    try:
        from ._split_ext import best_split, predict_packed  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass

GINI = _split_py.GINI
VARIANCE = _split_py.VARIANCE
