"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy fallback in ``_pykernels`` is used. Set ``VIPLO_KERNELS=python`` to
force the fallback, or ``VIPLO_KERNELS=cython`` to fail loudly when the
extension is missing.
"""
import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

BACKENDS = {"python": _pykernels}

try:
    from . import _ckernels
except ImportError as exc:  # pragma: no cover - depends on the build
    _ckernels = None
    log.debug("compiled kernels unavailable: %s", exc)
else:
    BACKENDS["cython"] = _ckernels


def _select():
    want = os.environ.get("VIPLO_KERNELS", "auto").lower()
    if want == "auto":
        return "cython" if "cython" in BACKENDS else "python"
    if want not in BACKENDS:
        raise ImportError(f"VIPLO_KERNELS={want!r} requested but available backends are {sorted(BACKENDS)}")
    return want


BACKEND = _select()
_impl = BACKENDS[BACKEND]

overlap_masks = _impl.overlap_masks
roi_align = _impl.roi_align
cls_attention = _impl.cls_attention


def get(name: str):
    """Return the kernel module for backend ``name``."""
    return BACKENDS[name]
