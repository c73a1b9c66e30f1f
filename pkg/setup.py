"""Builds the optional Cython kernel extension.

The package works without it: blocksearch._kernels falls back to the
pure numpy implementation when the extension is absent (or when
BLOCKSEARCH_PURE=1 is set).
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "blocksearch._kernels._fused",
                ["src/blocksearch/_kernels/_fused.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions)
