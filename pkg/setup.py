"""Build script for the compiled sampler core.

The extension is optional: if a C toolchain is missing the install still
succeeds and the package falls back to the pure NumPy engine at import time.
"""

import os

import numpy
import numpy.random
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext
from setuptools.errors import CCompilerError, ExecError, PlatformError
from Cython.Build import cythonize

EXT_ERRORS = (CCompilerError, ExecError, PlatformError, OSError)


class OptionalBuildExt(build_ext):
    """Skip the extension (with a warning) instead of failing the install."""

    def run(self):
        try:
            super().run()
        except EXT_ERRORS as exc:
            print(f"warning: compiled engine skipped ({exc}); "
                  f"pure Python engine will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except EXT_ERRORS as exc:
            print(f"warning: building {ext.name} failed ({exc}); "
                  f"pure Python engine will be used")


# the C-level random distributions live in a static helper library
_NPYRANDOM_DIR = os.path.join(os.path.dirname(numpy.random.__file__), "lib")

extensions = cythonize(
    [
        Extension(
            "latentlink._speedups",
            sources=["src/latentlink/_speedups.pyx"],
            include_dirs=[numpy.get_include()],
            library_dirs=[_NPYRANDOM_DIR],
            libraries=["npyrandom"],
            extra_compile_args=["-O3"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
    ],
    language_level=3,
    compiler_directives={
        "boundscheck": False,
        "wraparound": False,
        "cdivision": True,
        "initializedcheck": False,
    },
)

setup(ext_modules=extensions, cmdclass={"build_ext": OptionalBuildExt})
