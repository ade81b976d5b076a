"""Hot elementwise kernels with a compiled core and a pure-numpy fallback.

The compiled extension (``procnext.kernels._native``, Cython) is used when it
imported successfully; otherwise the numpy implementations take over with
identical semantics. Selection happens once at import and is reported in
``BACKEND``. Set ``PROCNEXT_KERNELS=fallback`` to force pure numpy, or
``PROCNEXT_KERNELS=native`` to fail loudly when the extension is missing.
``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import os

_requested = os.environ.get("PROCNEXT_KERNELS", "auto")
if _requested not in ("auto", "native", "fallback"):
    raise ValueError(f"PROCNEXT_KERNELS must be auto|native|fallback, got {_requested!r}")

if _requested == "fallback":
    from . import fallback as _backend
    BACKEND = "fallback"
else:
    try:
        from . import _native as _backend  # type: ignore[no-redef]
        BACKEND = "native"
    except ImportError:
        if _requested == "native":
            raise
        from . import fallback as _backend  # type: ignore[no-redef]
        BACKEND = "fallback"

gru_cell_fwd = _backend.gru_cell_fwd
gru_cell_bwd = _backend.gru_cell_bwd
lstm_cell_fwd = _backend.lstm_cell_fwd
lstm_cell_bwd = _backend.lstm_cell_bwd
scatter_add_rows = _backend.scatter_add_rows

__all__ = [
    "BACKEND",
    "gru_cell_fwd",
    "gru_cell_bwd",
    "lstm_cell_fwd",
    "lstm_cell_bwd",
    "scatter_add_rows",
]
