"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``IRONCLAD_PURE_PYTHON`` is set to a non-empty value,
the pure-Python implementations are used. Both produce identical output.
"""

from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("IRONCLAD_PURE_PYTHON"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels
        BACKEND = "python"

fill_symbols = _impl.fill_symbols
alpha_scan = _impl.alpha_scan
walk_batch = _impl.walk_batch


def get_backend(name: str):
    """Return the kernel module for ``name`` ('python' or 'cython')."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
