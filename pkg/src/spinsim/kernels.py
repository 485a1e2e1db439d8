"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``SPINSIM_PURE_PYTHON=1`` to force the numpy path.
"""
import os

from . import _fallback

BACKEND = "python"
if os.environ.get("SPINSIM_PURE_PYTHON") != "1":
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _fallback
    else:
        BACKEND = "cython"
else:
    _impl = _fallback

ising_diagonal = _impl.ising_diagonal
apply_tfim = _impl.apply_tfim
apply_field = _impl.apply_field

__all__ = ["BACKEND", "ising_diagonal", "apply_tfim", "apply_field"]
