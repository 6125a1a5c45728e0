import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; gchain falls back to numpy kernels
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "gchain._kernels",
                ["src/gchain/_kernels.pyx"],
                include_dirs=[np.get_include()],
                # Summation order is part of the reproducibility contract.
                extra_compile_args=["-O3", "-ffp-contract=off", "-fno-fast-math"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
