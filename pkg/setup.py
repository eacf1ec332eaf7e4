"""Build script for the optional compiled ray-tracing core.

The package works without the extension (a pure-numpy fallback is selected
at import time), so a missing compiler or Cython only costs speed.
Set MARKERSIM_PURE=1 to skip the extension build entirely.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("MARKERSIM_PURE"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "markersim._kernels._core",
                    ["src/markersim/_kernels/_core.pyx"],
                    # no FP contraction: the pure-numpy backend must be able to
                    # reproduce the compiled results operation for operation
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        pass

setup(ext_modules=ext_modules)
