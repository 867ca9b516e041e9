"""Top-down vision-language grid map: fusion, open-vocabulary labeling, targets.

Grid convention: cell ``(row, col)`` covers world
``x in [ox + col*res, ox + (col+1)*res)``, ``y in [oy + row*res, ...)``.
Positions are returned as world ``(x, y)`` in meters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from lovmm import io, kernels
from lovmm.encoders import MAP_DIM, TextEncoder, tokenize
from lovmm.errors import (
    DimensionMismatch,
    EmptyFrameSet,
    LabelNotFound,
    UnreachableTarget,
)

MAP_MAGIC = b"LVMP"
MAP_VERSION = 1

# Generic categories scored alongside the queries so that cells of other
# furniture do not default to the nearest query.
BACKGROUND_VOCAB = (
    "other", "floor", "wall", "sofa", "chair", "bed", "table", "desk", "carpet",
    "corner", "sink", "basket", "ground", "dresser", "shelf", "cabinet",
)


@dataclass
class MapConfig:
    grid_shape: tuple[int, int] = (100, 100)
    resolution: float = 0.05
    origin: tuple[float, float] = (0.0, 0.0)
    embedding_dim: int = MAP_DIM

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")


@dataclass
class CameraPose:
    """Top-down orthographic camera: center ``(x, y)``, ``height`` above floor, ``yaw``."""

    x: float
    y: float
    height: float
    yaw: float = 0.0


@dataclass
class Frame:
    image: np.ndarray
    depth: np.ndarray
    pose: CameraPose
    pixel_size: float
    labels: np.ndarray | None = None
    label_names: list[str] | None = None


def backproject(frame: Frame) -> tuple[np.ndarray, np.ndarray]:
    """Pixel -> world points ``(H, W, 3)`` and a validity mask (depth > 0)."""
    H, W = frame.depth.shape
    ps = frame.pixel_size
    rows, cols = np.mgrid[0:H, 0:W]
    lx = (cols + 0.5 - W / 2) * ps
    ly = (rows + 0.5 - H / 2) * ps
    c, s = math.cos(frame.pose.yaw), math.sin(frame.pose.yaw)
    pts = np.empty((H, W, 3))
    pts[..., 0] = frame.pose.x + c * lx - s * ly
    pts[..., 1] = frame.pose.y + s * lx + c * ly
    pts[..., 2] = frame.pose.height - frame.depth
    return pts, frame.depth > 0


@dataclass
class VLMap:
    Q: np.ndarray            # (Hg*Wg, C)
    grid_shape: tuple[int, int]
    resolution: float
    origin: tuple[float, float]
    height: np.ndarray       # (Hg, Wg)
    counts: np.ndarray       # (Hg, Wg)
    stats: dict = field(default_factory=dict)

    @property
    def embedding_dim(self) -> int:
        return self.Q.shape[1]

    def cell_center(self, row: float, col: float) -> tuple[float, float]:
        ox, oy = self.origin
        return ox + (col + 0.5) * self.resolution, oy + (row + 0.5) * self.resolution

    def world_to_cell(self, x, y):
        ox, oy = self.origin
        col = np.floor((np.asarray(x) - ox) / self.resolution).astype(np.int64)
        row = np.floor((np.asarray(y) - oy) / self.resolution).astype(np.int64)
        return row, col

    def save(self, path) -> None:
        header = {
            "version": MAP_VERSION,
            "grid_shape": list(self.grid_shape),
            "resolution": self.resolution,
            "origin": list(self.origin),
            "C": int(self.embedding_dim),
            "stats": self.stats,
        }
        io.save_bundle(path, MAP_MAGIC, header, {
            "Q": self.Q.astype(np.float32),
            "height": self.height.astype(np.float32),
            "counts": self.counts.astype(np.int64),
        })

    @classmethod
    def load(cls, path) -> "VLMap":
        header, arrays = io.load_bundle(path, MAP_MAGIC)
        if header["version"] != MAP_VERSION:
            raise ValueError(f"unsupported map version {header['version']}")
        return cls(
            Q=arrays["Q"].astype(np.float64),
            grid_shape=tuple(header["grid_shape"]),
            resolution=header["resolution"],
            origin=tuple(header["origin"]),
            height=arrays["height"].astype(np.float64),
            counts=arrays["counts"],
            stats=header.get("stats", {}),
        )


def build_map(frames: list[Frame], embedder, config: MapConfig | None = None) -> VLMap:
    """Fuse posed RGB-D frames into a grid of mean pixel embeddings.

    Zero-depth pixels and points outside the grid are dropped and counted
    in ``stats``.
    """
    config = config or MapConfig()
    if not frames:
        raise EmptyFrameSet("no frames to build a map from")
    if embedder.embedding_dim != config.embedding_dim:
        raise DimensionMismatch(
            f"embedder dim {embedder.embedding_dim} != map dim {config.embedding_dim}"
        )
    Hg, Wg = config.grid_shape
    C = config.embedding_dim
    sums = np.zeros((Hg * Wg, C))
    counts = np.zeros(Hg * Wg, dtype=np.int64)
    heights = np.zeros(Hg * Wg)
    stats = {"points": 0, "dropped_depth": 0, "dropped_out_of_bounds": 0}
    ox, oy = config.origin
    for frame in frames:
        emb = embedder.embed_pixels(frame.image, frame.depth, frame.labels, frame.label_names)
        if emb.shape[-1] != C:
            raise DimensionMismatch(f"pixel embeddings have dim {emb.shape[-1]}, map expects {C}")
        pts, valid = backproject(frame)
        stats["dropped_depth"] += int((~valid).sum())
        pts, emb = pts[valid], emb[valid]
        col = np.floor((pts[:, 0] - ox) / config.resolution).astype(np.int64)
        row = np.floor((pts[:, 1] - oy) / config.resolution).astype(np.int64)
        inb = (row >= 0) & (row < Hg) & (col >= 0) & (col < Wg)
        stats["dropped_out_of_bounds"] += int((~inb).sum())
        stats["points"] += int(inb.sum())
        cells = row[inb] * Wg + col[inb]
        kernels.accumulate_cells(cells, emb[inb], pts[inb, 2], sums, counts, heights)
    Q = np.zeros_like(sums)
    seen = counts > 0
    Q[seen] = sums[seen] / counts[seen, None]
    return VLMap(
        Q=Q,
        grid_shape=(Hg, Wg),
        resolution=config.resolution,
        origin=tuple(config.origin),
        height=heights.reshape(Hg, Wg),
        counts=counts.reshape(Hg, Wg),
        stats=stats,
    )


@dataclass
class QuerySet:
    labels: list[str]
    E: np.ndarray

    def __post_init__(self):
        if len(self.labels) < 1 or self.E.shape[0] != len(self.labels):
            raise ValueError("query set needs one embedding row per label (M >= 1)")

    @classmethod
    def from_labels(cls, labels, encoder: TextEncoder | None = None, dim: int = MAP_DIM):
        encoder = encoder or TextEncoder(dim)
        labels = list(labels)
        return cls(labels, np.stack([encoder.encode(l) for l in labels]))

    @classmethod
    def with_background(cls, queries, encoder: TextEncoder | None = None, dim: int = MAP_DIM,
                        background=BACKGROUND_VOCAB):
        """Background vocabulary first (so it wins ties), then the queries.

        Background terms that tokenize like a query are dropped so the query
        itself can win.
        """
        queries = list(dict.fromkeys(queries))
        taken = {frozenset(tokenize(q)) for q in queries}
        labels = [b for b in background if frozenset(tokenize(b)) not in taken] + queries
        return cls.from_labels(labels, encoder, dim)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LabelNotFound(f"{label!r} is not in the query set") from None


@dataclass
class LabelMap:
    M_c: np.ndarray      # (Hg*Wg,) label index or -1
    scores: np.ndarray   # (Hg*Wg,) winning similarity (0 where unobserved)
    labels: list[str]
    grid_shape: tuple[int, int]


def localize(vlmap: VLMap, queries: QuerySet) -> LabelMap:
    """Per-cell argmax of ``Q . E^T``; ties go to the lowest label index."""
    if vlmap.Q.shape[1] != queries.E.shape[1]:
        raise DimensionMismatch(f"map C={vlmap.Q.shape[1]} vs query C={queries.E.shape[1]}")
    sim = vlmap.Q @ queries.E.T
    M_c = np.argmax(sim, axis=1).astype(np.int64)
    scores = sim[np.arange(len(M_c)), M_c]
    seen = vlmap.counts.reshape(-1) > 0
    M_c[~seen] = -1
    scores = np.where(seen, scores, 0.0)
    return LabelMap(M_c, scores, list(queries.labels), tuple(vlmap.grid_shape))


@dataclass
class NavTarget:
    position: tuple[float, float]
    label: str
    support_cells: int
    grid_centroid: tuple[float, float] = (0.0, 0.0)

    def to_dict(self) -> dict:
        return {
            "position": [float(self.position[0]), float(self.position[1])],
            "label": self.label,
            "support_cells": int(self.support_cells),
            "grid_centroid": [float(self.grid_centroid[0]), float(self.grid_centroid[1])],
        }


_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


def target_position(vlmap: VLMap, label_map: LabelMap, label: str, min_cluster_size: int = 1) -> NavTarget:
    """Pick the 4-connected component of ``label`` with the greatest summed score.

    Returns its similarity-weighted centroid in world meters.
    """
    try:
        idx = label_map.labels.index(label)
    except ValueError:
        raise LabelNotFound(f"{label!r} was not queried") from None
    Hg, Wg = label_map.grid_shape
    mask = (label_map.M_c == idx).reshape(Hg, Wg)
    scores = label_map.scores.reshape(Hg, Wg)
    comp, n = ndimage.label(mask, structure=_FOUR_CONNECTED)
    best = None
    for k in range(1, n + 1):
        cells = comp == k
        size = int(cells.sum())
        if size < min_cluster_size:
            continue
        total = float(scores[cells].sum())
        if best is None or total > best[0]:
            best = (total, k, size)
    if best is None:
        raise LabelNotFound(f"no component of {label!r} with >= {min_cluster_size} cells")
    _, k, size = best
    rows, cols = np.nonzero(comp == k)
    w = np.maximum(scores[rows, cols], 0.0)
    if w.sum() <= 0:
        w = np.ones_like(w)
    r = float((rows * w).sum() / w.sum())
    c = float((cols * w).sum() / w.sum())
    return NavTarget(vlmap.cell_center(r, c), label, size, (r, c))


@dataclass
class RobotPose:
    x: float
    y: float
    yaw: float = 0.0
    workspace_id: str | None = None


def navigate(scene, target: NavTarget, snap_threshold: float = 0.25) -> RobotPose:
    """Teleport the robot to the approach point of the workspace nearest the target.

    Distance to a workspace is the smaller of the distance to its footprint
    and to its approach point.
    """
    p = np.asarray(target.position, dtype=np.float64)
    best, best_d = None, math.inf
    for ws in scene.workspaces:
        d = min(ws.footprint_distance(p), float(np.hypot(*(p - np.asarray(ws.approach)))))
        if d < best_d:
            best, best_d = ws, d
    if best is None or best_d > snap_threshold:
        raise UnreachableTarget(
            f"target {tuple(p)} is {best_d:.3f} m from the nearest workspace (limit {snap_threshold})"
        )
    pose = RobotPose(float(best.approach[0]), float(best.approach[1]), best.approach_yaw, best.id)
    scene.robot = pose
    return pose
