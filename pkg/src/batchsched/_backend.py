"""Selects the compiled kernels when built, else the numpy fallback.

Set ``BATCHSCHED_BACKEND=python`` to force the fallback.
"""
import os

from . import _kernels_py

try:
    if os.environ.get("BATCHSCHED_BACKEND", "").lower() == "python":
        raise ImportError("fallback forced")
    from . import _kernels as _impl
    NAME = "cython"
except ImportError:
    _impl = _kernels_py
    NAME = "python"

volterra_march = _impl.volterra_march
sgd_run = _impl.sgd_run
sgd_run_coupled = _impl.sgd_run_coupled
