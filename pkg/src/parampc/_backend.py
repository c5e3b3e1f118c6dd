"""Kernel backend selection.

The compiled Cython kernels are used when importable; otherwise, or when the
environment variable ``PARAMPC_BACKEND=python`` is set, the numpy fallback
in ``_kernels_py`` is used. Both expose ``dual_active_set``, ``locate`` and
``locate_many`` with identical signatures.
"""
import os

from . import _kernels_py

if os.environ.get("PARAMPC_BACKEND", "").lower() == "python":
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        kernels = _kernels_py
        BACKEND = "python"

dual_active_set = kernels.dual_active_set
locate = kernels.locate
locate_many = kernels.locate_many
