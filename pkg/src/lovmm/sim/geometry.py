"""Planar shapes, poses and point-in-polygon helpers."""
from __future__ import annotations

import math

import numpy as np
from matplotlib.path import Path


def rect(length: float, width: float) -> np.ndarray:
    """Axis-aligned rectangle centred at the origin: x spans ``length``, y spans ``width``."""
    a, b = length / 2, width / 2
    return np.array([[-a, -b], [a, -b], [a, b], [-a, b]])


def square(size: float) -> np.ndarray:
    return rect(size, size)


def regular_polygon(n: int, radius: float, phase: float = 0.0) -> np.ndarray:
    t = phase + 2 * np.pi * np.arange(n) / n
    return np.stack([radius * np.cos(t), radius * np.sin(t)], axis=1)


def circle(radius: float, n: int = 32) -> np.ndarray:
    return regular_polygon(n, radius)


def star(radius: float, points: int = 5, inner: float = 0.45) -> np.ndarray:
    t = np.pi / 2 + np.pi * np.arange(2 * points) / points
    r = np.where(np.arange(2 * points) % 2 == 0, radius, radius * inner)
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=1)


def cross(size: float, arm: float = 0.36) -> np.ndarray:
    a, b = size / 2, size * arm / 2
    return np.array([
        [-b, -a], [b, -a], [b, -b], [a, -b], [a, b], [b, b],
        [b, a], [-b, a], [-b, b], [-a, b], [-a, -b], [-b, -b],
    ])


def heart(size: float, n: int = 40) -> np.ndarray:
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    x = 16 * np.sin(t) ** 3
    y = -(13 * np.cos(t) - 5 * np.cos(2 * t) - 2 * np.cos(3 * t) - np.cos(4 * t))
    pts = np.stack([x, y], axis=1)
    pts -= pts.mean(axis=0)
    return pts * (size / 2) / np.abs(pts).max()


# name -> (polygon factory(size), rotational symmetry order)
SHAPES = {
    "square": (lambda s: square(s * 0.8), 4),
    "circle": (lambda s: circle(s / 2), 36),
    "triangle": (lambda s: regular_polygon(3, s / 2, np.pi / 2), 3),
    "star": (lambda s: star(s / 2), 5),
    "pentagon": (lambda s: regular_polygon(5, s / 2, np.pi / 2), 5),
    "hexagon": (lambda s: regular_polygon(6, s / 2), 6),
    "diamond": (lambda s: rect(s * 0.9, s * 0.55) @ rot2(np.pi / 4).T, 2),
    "cross": (lambda s: cross(s), 4),
    "heart": (lambda s: heart(s), 1),
}


def rot2(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def transform(poly: np.ndarray, x: float, y: float, yaw: float) -> np.ndarray:
    return poly @ rot2(yaw).T + np.array([x, y])


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, 1)) - np.dot(y, np.roll(x, 1))))


def contains(poly: np.ndarray, points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(points)
    return Path(poly).contains_points(points)


def radius(poly: np.ndarray) -> float:
    return float(np.linalg.norm(poly, axis=1).max())


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def symmetric_delta(a: float, b: float, order: int) -> float:
    """Smallest |a - b| modulo the shape's rotational symmetry."""
    period = 2 * np.pi / max(order, 1)
    d = (a - b) % period
    return float(min(d, period - d))


def rot3(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Extrinsic yaw, then pitch about y, then roll about x: ``Rx @ Ry @ Rz``.

    With this order the surface normal depends on (roll, pitch) only.
    """
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return Rx @ Ry @ Rz


def rect_distance(point, half_extent) -> float:
    """Distance from a point (in the rectangle's centred frame) to the rectangle."""
    d = np.maximum(np.abs(np.asarray(point)) - np.asarray(half_extent), 0.0)
    return float(np.hypot(*d))
