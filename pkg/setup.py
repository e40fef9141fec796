"""Build script for the optional compiled kernel extension.

The package is pure Python plus one small Cython extension holding the fused
inner-loop kernels.  The extension is marked optional: if Cython or a C
compiler is missing the build still succeeds and the package falls back to
the numpy kernel implementations at import time.

-ffp-contract=off keeps the compiler from fusing multiply-adds so the
compiled kernels round exactly like the numpy fallback and the two backends
stay bit-identical.
"""

from setuptools import Extension, setup

ext = Extension(
    "audiodiff.kernels._core",
    sources=["src/audiodiff/kernels/_core.pyx"],
    extra_compile_args=["-O3", "-ffp-contract=off"],
    optional=True,
)

try:
    from Cython.Build import cythonize

    ext_modules = cythonize([ext], language_level=3)
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
