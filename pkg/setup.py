"""Build script: compiles the optional Cython assembly kernels.

The package works without the extension (a vectorized NumPy backend is
selected at import time), so a failed compilation only costs speed.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("THINPERM_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            "src/thinperm/kernels/_cykernels.pyx",
            compiler_directives={
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "language_level": 3,
            },
        )
        for ext in ext_modules:
            ext.include_dirs.append(numpy.get_include())
    except Exception as exc:  # pragma: no cover - build-environment dependent
        print(f"thinperm: skipping Cython extension ({exc}); NumPy backend will be used")
        ext_modules = []

setup(ext_modules=ext_modules)
