"""Kernel backend selection.

The compiled extension is used when it was built; setting the environment
variable ``TVNASH_BACKEND=python`` forces the numpy fallback.
"""
import os

from . import _fallback

if os.environ.get("TVNASH_BACKEND", "").lower() == "python":
    backend = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as backend
        BACKEND = "cython"
    except ImportError:  # extension not built
        backend = _fallback
        BACKEND = "python"

fallback = _fallback
ALG1, ALG2, UNCONSTRAINED = _fallback.ALG1, _fallback.ALG2, _fallback.UNCONSTRAINED
MAX_ITERS, CONVERGED, DIVERGED = _fallback.MAX_ITERS, _fallback.CONVERGED, _fallback.DIVERGED
