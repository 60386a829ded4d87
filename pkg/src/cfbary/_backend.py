"""Kernel backend selection.

The compiled extension is used when importable; set ``CFBARY_PURE_PYTHON=1``
to force the numpy fallback (used by the benchmark and equivalence tests).
"""
import os

from cfbary import _pykernels

if os.environ.get("CFBARY_PURE_PYTHON", "") == "1":
    kernels = _pykernels
    BACKEND = "python"
else:
    try:
        from cfbary import _ckernels as kernels
        BACKEND = "cython"
    except ImportError:  # extension not built
        kernels = _pykernels
        BACKEND = "python"

__all__ = ["kernels", "BACKEND"]
