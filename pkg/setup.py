"""Build script: compiles the optional Cython scan kernel.

The package works without the extension (a numpy fallback is selected at
import time), so any failure here downgrades to a pure-Python install
instead of aborting.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "pedscan._kernels._scan_cy",
                ["src/pedscan/_kernels/_scan_cy.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    sys.stderr.write(f"pedscan: skipping Cython kernel build ({exc}); "
                     "pure-Python fallback will be used\n")
    ext_modules = []

setup(ext_modules=ext_modules)
