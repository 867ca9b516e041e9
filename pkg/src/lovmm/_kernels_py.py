"""Numpy implementations of the compiled kernels (same signatures)."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def correlate(templates, key):
    k, c, _, d = templates.shape
    H, W, _ = key.shape
    half = c // 2
    padded = np.zeros((H + c - 1, W + c - 1, d))
    padded[half:half + H, half:half + W] = key
    # windows: (H, W, d, c, c)
    windows = sliding_window_view(padded, (c, c), axis=(0, 1))
    return np.einsum("uvdab,kabd->uvk", windows, templates, optimize=True)


def accumulate_cells(cells, emb, z, sums, counts, heights):
    if len(cells) == 0:
        return
    np.add.at(sums, cells, emb)
    fresh = np.full(heights.shape, -np.inf)
    np.maximum.at(fresh, cells, z)
    touched = np.unique(cells)
    seen = counts[touched] > 0
    heights[touched] = np.where(seen, np.maximum(heights[touched], fresh[touched]), fresh[touched])
    np.add.at(counts, cells, 1)
