from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    # -ffp-contract=off keeps the compiled kernels bit-identical to the
    # pure-Python reference backend (no fused multiply-add).
    ext_modules = cythonize(
        [
            Extension(
                "ierl.kernels._fast",
                ["src/ierl/kernels/_fast.pyx"],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

for ext in ext_modules:
    ext.optional = True  # build failures fall back to the pure-Python kernels

setup(ext_modules=ext_modules)
