import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("CANLOOP_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "canloop._core",
                ["src/canloop/_core.pyx"],
                # -ffp-contract=off keeps the compiled kernel bit-identical
                # to the pure Python one (no fused multiply-add).
                extra_compile_args=["-O2", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
