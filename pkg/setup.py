"""Build script for the compiled ROI-Align kernel.

The extension is optional: if Cython or a C compiler is unavailable
(or XFEROD_SKIP_EXT=1 is set), the package falls back to the pure
numpy kernel selected at import time.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("XFEROD_SKIP_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "xferod._roialign_cy",
                    sources=["src/xferod/_roialign_cy.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
                "language_level": "3",
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
