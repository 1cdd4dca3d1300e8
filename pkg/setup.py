"""Builds the optional compiled kernel extension.

The package works without it (a pure NumPy/Python fallback is selected at
import time), so a missing compiler or Cython only costs speed.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    # -ffp-contract=off: the compiled kernels must be bit-identical to the
    # pure-Python fallback, so FMA contraction is forbidden.
    extensions = cythonize(
        [
            Extension(
                "bevkit._kernels",
                ["src/bevkit/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
