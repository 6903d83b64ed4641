"""Build the optional compiled core; the package works without it."""
import os

import numpy as np
from setuptools import setup

ext_modules = []
if not os.environ.get("NEUROLOOM_NO_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension(
                "neuroloom._core",
                ["src/neuroloom/_core.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )],
            compiler_directives={"language_level": 3},
        )

setup(ext_modules=ext_modules)
