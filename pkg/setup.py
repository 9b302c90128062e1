from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; kernels fall back at import
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("qmarkov._kernels", ["src/qmarkov/_kernels.pyx"])],
        language_level=3,
    )

setup(ext_modules=ext_modules)
