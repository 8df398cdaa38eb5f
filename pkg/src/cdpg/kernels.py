"""Backend selection for the policy kernels.

The compiled extension is used when it imports; otherwise, or when
``CDPG_PURE_PYTHON`` is set to a non-empty value other than ``0``, the numpy
implementation is used.  Both expose ``sample``, ``logprob`` and
``accumulate_grad`` with identical signatures.
"""

import os

from . import _kernels_py

BIGRAM = _kernels_py.BIGRAM
PREFIX = _kernels_py.PREFIX


def _load():
    if os.environ.get("CDPG_PURE_PYTHON", "") not in ("", "0"):
        return _kernels_py, "python"
    try:
        from . import _kernels
    except ImportError:
        return _kernels_py, "python"
    return _kernels, "compiled"


backend, BACKEND = _load()


def get_backend(name):
    """Return the kernel module for ``"compiled"`` or ``"python"``."""
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")
