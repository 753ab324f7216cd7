"""Build the optional Cython kernels; fall back to pure Python when unavailable."""
import sys

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension
    import numpy as np

    ext_modules = cythonize(
        [
            Extension(
                "scribblegate.scribblegen._kernels",
                ["src/scribblegate/scribblegen/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )
except ImportError as exc:  # pragma: no cover - build-environment dependent
    sys.stderr.write("cython/numpy unavailable (%s); installing pure-python kernels only\n" % exc)

setup(ext_modules=ext_modules)
