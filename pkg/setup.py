"""Build script for the optional compiled kNN kernel.

The package works without the extension (a numpy fallback is selected at
import time), so any failure to cythonize or compile should not block
installation: set LAYERKIT_NO_EXT=1 to skip the extension entirely.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("LAYERKIT_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        openmp = [] if os.environ.get("LAYERKIT_NO_OPENMP") else ["-fopenmp"]
        ext_modules = cythonize(
            [
                Extension(
                    "layerkit._kernels._knn_cy",
                    ["src/layerkit/_kernels/_knn_cy.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"] + openmp,
                    extra_link_args=list(openmp),
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
