import sys

from setuptools import setup

# The compiled alignment kernel is optional: fieldlens falls back to the pure
# Python implementation at import time when the extension is missing.
ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "fieldlens._nwkernel",
                ["src/fieldlens/_nwkernel.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build environment dependent
    print(f"fieldlens: skipping compiled kernel ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
