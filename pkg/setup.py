import os

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # fall back to the pure numpy kernel
    cythonize = None

openmp = [] if os.environ.get("DYAN_NO_OPENMP") else ["-fopenmp"]

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "dyan._fista_ext",
                ["src/dyan/_fista_ext.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"] + openmp,
                extra_link_args=openmp,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
