"""Kernel backend selection.

Two interchangeable backends implement the hot loops (separable resampling
and bilinear warping): a compiled Cython extension and a pure-NumPy fallback.
They are bit-identical by construction; selection is:

- ``CROPFORGE_KERNELS=auto`` (default): compiled backend if importable,
  otherwise NumPy.
- ``CROPFORGE_KERNELS=cython``: require the compiled backend, raise if absent.
- ``CROPFORGE_KERNELS=numpy``: force the pure-NumPy backend.

``BACKEND`` names the backend actually in use.
"""

from __future__ import annotations

import os

from . import _pykernels
from .taps import axis_taps

_requested = os.environ.get("CROPFORGE_KERNELS", "auto").strip().lower()

if _requested not in ("auto", "cython", "numpy"):
    raise RuntimeError(
        f"CROPFORGE_KERNELS must be 'auto', 'cython' or 'numpy', got {_requested!r}"
    )

if _requested == "numpy":
    _impl = _pykernels
    BACKEND = "numpy"
else:
    try:
        from . import _cykernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise RuntimeError(
                "CROPFORGE_KERNELS=cython but the compiled extension is not "
                "available; build it or use CROPFORGE_KERNELS=numpy"
            ) from None
        _impl = _pykernels
        BACKEND = "numpy"

resample_h = _impl.resample_h
resample_v = _impl.resample_v
warp_bilinear = _impl.warp_bilinear

__all__ = [
    "BACKEND",
    "axis_taps",
    "resample_h",
    "resample_v",
    "warp_bilinear",
]
