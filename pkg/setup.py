# Cython extension build; everything else lives in pyproject.toml.
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        name="stagespace._ckernels",
        sources=["src/stagespace/_ckernels.pyx"],
        extra_compile_args=["-O3"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
