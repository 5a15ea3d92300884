"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy/scipy
fallback. Set ``WALKGRID_BACKEND=python`` to force the fallback.
"""
import logging
import os

from walkgrid import _pykernels

log = logging.getLogger(__name__)


def _load():
    if os.environ.get("WALKGRID_BACKEND", "").lower() == "python":
        return _pykernels, "python"
    try:
        from walkgrid import _ckernels
    except ImportError as exc:
        log.debug("compiled kernels unavailable (%s); using python fallback", exc)
        return _pykernels, "python"
    return _ckernels, "cython"


kernels, BACKEND = _load()


def get_kernels(name=None):
    """Kernel module by name (``"cython"`` or ``"python"``), default active."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        from walkgrid import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
