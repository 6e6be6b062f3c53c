"""Builds the optional compiled kernel extension.

The package works without it; poisonlab._kernels falls back to the numpy
implementation when the extension is missing or fails to build.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "poisonlab._kernels._native",
                ["src/poisonlab/_kernels/_native.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
