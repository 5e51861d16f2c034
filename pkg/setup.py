"""Build script: compiles the fast likelihood kernel when Cython and a C
compiler are available, otherwise installs the pure-Python fallback only."""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("RRMAR_SKIP_EXT") != "1" and os.path.exists("src/rrmar/_fastcore.pyx"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "rrmar._fastcore",
                    ["src/rrmar/_fastcore.pyx"],
                    include_dirs=[numpy.get_include()],
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
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
