import os

from setuptools import Extension, setup

# The compiled kernel lane is optional: if Cython (or a C compiler) is
# unavailable the package falls back to the pure-Python kernels at import.
ext_modules = []
if os.environ.get("NOCSIM_SKIP_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "nocsim.kernels._core",
                    ["src/nocsim/kernels/_core.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
