"""Build script for the optional compiled kernels.

The extension is optional: if compilation fails the package falls back
to the pure-numpy kernels at import time.
"""
import logging

import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

log = logging.getLogger(__name__)


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - toolchain dependent
            log.warning("compiled kernels not built (%s); using fallback", exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover
            log.warning("failed to build %s (%s); using fallback", ext.name, exc)


try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "hybridem._kernels",
                ["src/hybridem/_kernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-fcx-limited-range"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:  # pragma: no cover
    ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
