"""Build the optional compiled kernel module.

The package works without it: ``vpx.engine.backend`` falls back to the numpy
kernels when ``vpx._kernels`` cannot be imported.
"""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("VPX_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:  # pragma: no cover - build without Cython
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "vpx._kernels",
                    ["src/vpx/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
