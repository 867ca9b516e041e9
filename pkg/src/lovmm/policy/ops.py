"""Array-level policy operations: crop, template rotation, argmax selection.

Conventions shared with training:

* crop window rows/cols ``[u - c//2, u - c//2 + c)``, zero padded;
* correlation ``Q[u, v, i] = sum T_i[a, b, :] . K[u - c//2 + a, v - c//2 + b, :]``;
* rotation bin ``i`` turns template content by ``2*pi*i/k`` in the
  ``(x = col, y = row)`` frame about the template center ``((c-1)/2, (c-1)/2)``,
  bilinear with zero fill. The sampling grid is turned the opposite way.
"""
from __future__ import annotations

import functools
import math

import numpy as np

from lovmm import kernels
from lovmm.actions import PickPose, PlacePose


def crop_query(features: np.ndarray, pick: PickPose | tuple, c: int) -> np.ndarray:
    """``c x c x d`` window of ``features`` (H, W, d) around the pick pixel, zero padded."""
    u, v = (pick.u, pick.v) if isinstance(pick, PickPose) else pick
    H, W, d = features.shape
    out = np.zeros((c, c, d), dtype=features.dtype)
    r0, c0 = u - c // 2, v - c // 2
    rs, re = max(r0, 0), min(r0 + c, H)
    cs, ce = max(c0, 0), min(c0 + c, W)
    if rs < re and cs < ce:
        out[rs - r0:re - r0, cs - c0:ce - c0] = features[rs:re, cs:ce]
    return out


@functools.lru_cache(maxsize=64)
def _rotation_operator(c: int, theta: float) -> np.ndarray:
    S = np.zeros((c * c, c * c))
    center = (c - 1) / 2.0
    cs, sn = math.cos(theta), math.sin(theta)
    for a in range(c):          # output row (y)
        for b in range(c):      # output col (x)
            x, y = b - center, a - center
            # inverse rotation of the output location gives the source point
            sx = cs * x + sn * y + center
            sy = -sn * x + cs * y + center
            # snap float noise so grid-exact angles are exact permutations
            sx, sy = round(sx, 9), round(sy, 9)
            x0, y0 = math.floor(sx), math.floor(sy)
            fx, fy = sx - x0, sy - y0
            for yy, xx, w in ((y0, x0, (1 - fx) * (1 - fy)), (y0, x0 + 1, fx * (1 - fy)),
                              (y0 + 1, x0, (1 - fx) * fy), (y0 + 1, x0 + 1, fx * fy)):
                if w > 0 and 0 <= yy < c and 0 <= xx < c:
                    S[a * c + b, yy * c + xx] += w
    S.setflags(write=False)
    return S


def rotation_operators(c: int, k: int) -> np.ndarray:
    """``(k, c*c, c*c)`` bilinear sampling matrices, one per yaw bin."""
    return np.stack([_rotation_operator(c, 2 * math.pi * i / k) for i in range(k)])


def rotate_templates(template: np.ndarray, k: int) -> np.ndarray:
    """``(c, c, d)`` template -> ``(k, c, c, d)`` rotated copies."""
    c, _, d = template.shape
    flat = template.reshape(c * c, d)
    ops = rotation_operators(c, k)
    return np.einsum("kpq,qd->kpd", ops, flat).reshape(k, c, c, d)


def argmax_pick(Q_pick: np.ndarray) -> PickPose:
    """Row-major argmax; ties go to the lowest flat index."""
    idx = int(np.argmax(Q_pick))
    u, v = np.unravel_index(idx, Q_pick.shape)
    return PickPose(int(u), int(v))


def argmax_place(Q_place: np.ndarray) -> tuple[int, int, int]:
    """Argmax over ``(u, v, yaw)`` of an ``(H, W, k)`` volume, row-major then lowest bin."""
    idx = int(np.argmax(Q_place))
    u, v, i = np.unravel_index(idx, Q_place.shape)
    return int(u), int(v), int(i)


def predict_pick(Q_pick: np.ndarray) -> tuple[np.ndarray, PickPose]:
    return Q_pick, argmax_pick(Q_pick)


def place_values(phi_features: np.ndarray, template: np.ndarray, k: int) -> np.ndarray:
    """Rotate the template into ``k`` bins and correlate with the key -> ``(H, W, k)``."""
    return kernels.correlate(rotate_templates(template, k), phi_features)


def predict_place(phi_features: np.ndarray, template: np.ndarray, k: int) -> tuple[np.ndarray, PlacePose]:
    Q = place_values(phi_features, template, k)
    u, v, i = argmax_place(Q)
    return Q, PlacePose(u, v, i)


def response_vector(key: np.ndarray, template: np.ndarray, u: int, v: int, yaw_index: int, k: int) -> np.ndarray:
    """Per-channel correlation response at one ``(u, v, yaw)``: shape ``(d,)``."""
    c = template.shape[0]
    rot = rotate_templates(template, k)[yaw_index]
    window = crop_query(key, (u, v), c)
    return (rot * window).sum(axis=(0, 1))
