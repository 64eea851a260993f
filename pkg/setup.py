"""Build script for the optional compiled engine core.

The package works without the extension (a pure-Python core is selected at
import time); the Cython kernel only accelerates trajectory integration.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "dieseltwin.engine._core",
                ["src/dieseltwin/engine/_core.pyx"],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
