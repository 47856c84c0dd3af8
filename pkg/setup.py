"""Build hook for the optional compiled kernels.

The package works without them; ``structoed.kernels`` falls back to the
numpy implementation when the extension is missing.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("STRUCTOED_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "structoed._kernels",
                    ["src/structoed/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
