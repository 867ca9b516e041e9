"""Independent brute-force oracles shared by the tests."""
from __future__ import annotations

import math

import numpy as np


def brute_rotate(T: np.ndarray, theta: float) -> np.ndarray:
    """Bilinear, zero-fill rotation of content by +theta in the (x=col, y=row) frame."""
    c = T.shape[0]
    ctr = (c - 1) / 2
    out = np.zeros_like(T)
    for a in range(c):
        for b in range(c):
            x, y = b - ctr, a - ctr
            # the source point is the output location turned back by theta
            sx = math.cos(-theta) * x - math.sin(-theta) * y + ctr
            sy = math.sin(-theta) * x + math.cos(-theta) * y + ctr
            sx, sy = round(sx, 9), round(sy, 9)
            x0, y0 = math.floor(sx), math.floor(sy)
            for yy in (y0, y0 + 1):
                for xx in (x0, x0 + 1):
                    w = (1 - abs(sx - xx)) * (1 - abs(sy - yy))
                    if w > 0 and 0 <= yy < c and 0 <= xx < c:
                        out[a, b] += w * T[yy, xx]
    return out


def brute_place(key: np.ndarray, T: np.ndarray, k: int) -> np.ndarray:
    H, W, d = key.shape
    c = T.shape[0]
    Q = np.zeros((H, W, k))
    for i in range(k):
        R = brute_rotate(T, 2 * math.pi * i / k)
        for u in range(H):
            for v in range(W):
                s = 0.0
                for a in range(c):
                    for b in range(c):
                        r, q = u - c // 2 + a, v - c // 2 + b
                        if 0 <= r < H and 0 <= q < W:
                            s += float(R[a, b] @ key[r, q])
                Q[u, v, i] = s
    return Q
