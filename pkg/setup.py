"""Build the optional compiled kernels; the package works without them."""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("DRONEMAC_PURE", "") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "dronemac.kernels._ckernels",
                    ["src/dronemac/kernels/_ckernels.pyx"],
                    # exact float semantics matter for orientation tests
                    extra_compile_args=["-O2", "-fno-fast-math"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
