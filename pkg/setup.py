"""Build script: compiles the trajectory-stepping kernel when Cython is available.

The package works without the extension (a pure-numpy fallback is selected at
import time), so a failed extension build only costs speed.
"""

from setuptools import setup

try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "monfi._kernels._core",
                ["src/monfi/_kernels/_core.pyx"],
                extra_compile_args=["-O3", "-fcx-limited-range"],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
