"""Build script for the compiled simulation kernel.

The extension links against numpy's npyrandom static library so the hot
loop can draw from the same PCG64 bit stream as the pure-Python fallback.
-ffp-contract=off keeps the compiled arithmetic bit-identical to CPython's
(no fused multiply-adds), which the backend parity tests rely on.
"""

import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

npy_random_lib = os.path.join(os.path.dirname(np.random.__file__), "lib")

extensions = [
    Extension(
        "quadpida.backends._core",
        sources=["src/quadpida/backends/_core.pyx"],
        include_dirs=[np.get_include()],
        library_dirs=[npy_random_lib],
        libraries=["npyrandom"],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
