"""Hot-loop kernels, compiled when available, numpy otherwise.

Set ``LOVMM_KERNELS=python`` to force the numpy fallback.
"""
import os

import numpy as np

from lovmm import _kernels_py

python_impl = _kernels_py
compiled_impl = None

if os.environ.get("LOVMM_KERNELS", "").lower() != "python":
    try:
        from lovmm import _kernels as compiled_impl  # type: ignore[no-redef]
    except ImportError:
        compiled_impl = None

_impl = compiled_impl if compiled_impl is not None else python_impl
BACKEND = "cython" if compiled_impl is not None else "python"


def correlate(templates, key):
    """Correlate ``(k, c, c, d)`` templates with an ``(H, W, d)`` key -> ``(H, W, k)``."""
    templates = np.ascontiguousarray(templates, dtype=np.float64)
    key = np.ascontiguousarray(key, dtype=np.float64)
    if templates.ndim != 4 or key.ndim != 3 or templates.shape[3] != key.shape[2]:
        raise ValueError(f"bad shapes {templates.shape} / {key.shape}")
    return _impl.correlate(templates, key)


def accumulate_cells(cells, emb, z, sums, counts, heights):
    """Fuse point embeddings into grid cells in place (sum, count, max height)."""
    _impl.accumulate_cells(
        np.ascontiguousarray(cells, dtype=np.int64),
        np.ascontiguousarray(emb, dtype=np.float64),
        np.ascontiguousarray(z, dtype=np.float64),
        sums, counts, heights,
    )
