"""Build script: compiles the optional stepping kernel.

The package works without the extension (a pure-numpy twin is selected at
import time), so the build is marked optional and failures are non-fatal.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext = Extension(
        "nashflow._kernels._euler_cy",
        ["src/nashflow/_kernels/_euler_cy.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        optional=True,
    )
    ext_modules = cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
