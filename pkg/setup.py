"""Builds the optional compiled kernels; the package falls back to numpy when they are absent."""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("WINDEMOS_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "windemos._core._kernels",
                    ["src/windemos/_core/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
            compiler_directives={"boundscheck": False, "wraparound": False, "cdivision": True},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
