"""Build script for the optional compiled stepper kernels.

The package is fully functional without the extension (a pure numpy
implementation of the same kernels is selected at import time), so the
extension build is allowed to fail, e.g. on machines without a C toolchain.
"""

from setuptools import setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the accelerator if possible, fall back to pure Python if not."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # toolchain missing -> fallback backend
            print(f"WARNING: compiled kernels skipped ({exc!r}); "
                  "the pure-Python backend will be used.")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"WARNING: building {ext.name} failed ({exc!r}); "
                  "the pure-Python backend will be used.")


def _extensions():
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        return []
    ext = Extension(
        "diskmin.backends._native",
        sources=["src/diskmin/backends/_native.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level=3)


setup(
    ext_modules=_extensions(),
    cmdclass={"build_ext": optional_build_ext},
)
