import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

setup(
    ext_modules=cythonize(
        [
            Extension(
                "mcxeb.kernels._statevec",
                ["src/mcxeb/kernels/_statevec.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-march=native", "-fcx-limited-range"],
            )
        ],
        compiler_directives={"language_level": "3"},
    ),
)
