import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

# Compiled convolution kernels. The package falls back to the numpy
# implementation in i2v._conv_numpy when this extension is unavailable.
extensions = [
    Extension(
        "i2v._convcore",
        ["src/i2v/_convcore.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3", "-march=native", "-ffast-math"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    ),
)
