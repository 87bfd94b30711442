"""Build hook for the optional compiled split-search kernel.

If Cython or a C compiler is unavailable the package still installs and the
pure-numpy kernel is used at import time.
"""
import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("GENERALBW_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext = Extension(
            name="generalbw.learn._split_ext",
            sources=["src/generalbw/learn/_split_ext.pyx"],
            include_dirs=[np.get_include()],
            # fused multiply-add would change rounding vs the numpy kernel
            extra_compile_args=["-O2", "-ffp-contract=off"],
        )
        ext_modules = cythonize(
            [ext],
            language_level="3",
            compiler_directives={
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "initializedcheck": False,
            },
        )

setup(ext_modules=ext_modules)
