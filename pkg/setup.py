"""Build script for the optional compiled kernel backend.

The extension mirrors the pure-Python kernels bit for bit, which
requires disabling floating point contraction; if the build toolchain
is unavailable the package falls back to the Python backend at import
time, so the extension is declared optional.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "chaoscert._kernels._fast",
        ["src/chaoscert/_kernels/_fast.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O2", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
