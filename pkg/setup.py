"""Build script for the optional compiled gate kernels.

The package works without the extension: clarigen.kernels falls back to the
numpy implementation when the compiled module is missing. Building is
therefore best-effort; a failing C toolchain only costs speed.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """build_ext that downgrades compiler failures to a warning."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001 - any toolchain failure
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            f"WARNING: building the compiled kernels failed ({exc}); "
            "falling back to the pure numpy implementation.",
            file=sys.stderr,
        )


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        optional_build_ext._warn(exc)
        return []
    ext = Extension(
        "clarigen.kernels._gates",
        sources=["src/clarigen/kernels/_gates.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level="3")


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": optional_build_ext},
)
