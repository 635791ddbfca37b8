import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # fall back to the numpy kernels
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("sherbet._kernels._ckernels",
                   ["src/sherbet/_kernels/_ckernels.pyx"],
                   include_dirs=[np.get_include()],
                   extra_compile_args=["-O3"])],
        language_level=3,
    )

setup(ext_modules=ext_modules)
