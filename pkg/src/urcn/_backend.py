"""Select compiled or pure-Python kernels.

The compiled extension is used when importable unless ``URCN_PURE_PYTHON=1``
is set in the environment. Both backends expose ``trace_rays`` and
``dart_throw`` with identical results.
"""
import os

from . import _kernels_py as python_kernels

try:
    from . import _kernels as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

if compiled_kernels is not None and os.environ.get("URCN_PURE_PYTHON") != "1":
    kernels = compiled_kernels
    BACKEND = "compiled"
else:
    kernels = python_kernels
    BACKEND = "python"


def get_kernels(name=None):
    """Return the kernel module for ``name`` in {None, 'compiled', 'python'}."""
    if name is None:
        return kernels
    if name == "python":
        return python_kernels
    if name == "compiled":
        if compiled_kernels is None:
            raise RuntimeError("compiled kernels are not available; build the extension first")
        return compiled_kernels
    raise ValueError(f"unknown backend {name!r}")
