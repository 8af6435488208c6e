"""Build the optional compiled RK4 kernel.

If Cython or a C compiler is missing the package still installs and falls
back to the pure-Python loop.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "hbvcapsid._kernels",
                ["src/hbvcapsid/_kernels.pyx"],
                # no FMA contraction: keeps results bitwise equal to the Python loop
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
