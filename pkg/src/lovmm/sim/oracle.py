"""Scripted expert: picks the next unsatisfied target and places it in its goal region."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from lovmm.actions import Action, Observation, PickPose, PlacePose
from lovmm.sim import geometry as geo
from lovmm.sim.scene import (
    GroundTruthStep,
    Scene,
    SimObject,
    render,
    satisfied,
    step,
    support_height,
)

# Containers that take one object at their center; the rest are packed by cells.
CENTER_KINDS = frozenset({"slot", "bowl", "cup", "plate"})
CELL_STEP = 0.005
PACK_MARGIN = 0.006


@dataclass
class OracleStep:
    nav: list[GroundTruthStep]
    action: Action
    target: int
    container: int


def pixel_of(scene: Scene, x: float, y: float) -> tuple[int, int]:
    ps = scene.pixel_size
    u = int(np.clip(math.floor(y / ps), 0, scene.H - 1))
    v = int(np.clip(math.floor(x / ps), 0, scene.W - 1))
    return u, v


def pixel_center(scene: Scene, u: int, v: int) -> tuple[float, float]:
    ps = scene.pixel_size
    return (v + 0.5) * ps, (u + 0.5) * ps


def _interior_cells(cont: SimObject, r: float) -> np.ndarray:
    """Candidate centroids (container frame), row-major, at least ``r`` inside the interior."""
    poly = cont.container.interior
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    xs = np.arange(lo[0] + r, hi[0] - r + 1e-9, CELL_STEP)
    ys = np.arange(lo[1] + r, hi[1] - r + 1e-9, CELL_STEP)
    if len(xs) == 0 or len(ys) == 0:
        return np.zeros((0, 2))
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    ok = np.ones(len(pts), dtype=bool)
    for t in np.linspace(0, 2 * np.pi, 12, endpoint=False):
        ok &= geo.contains(poly, pts + r * np.array([math.cos(t), math.sin(t)]))
    return pts[ok]


def _local_to_world(cont: SimObject, local: np.ndarray) -> np.ndarray:
    p3 = np.column_stack([local, np.zeros(len(local))]) @ cont.rotation().T
    return p3[:, :2] + np.array([cont.x, cont.y])


def free_cell(scene: Scene, cont: SimObject, obj: SimObject, occupied=None):
    """First interior cell (world x, y) clear of every other movable on the container's workspace."""
    # the place pixel moves the centroid by up to half a pixel diagonal
    snap = scene.pixel_size * math.sqrt(0.5)
    cells = _interior_cells(cont, obj.radius + snap)
    if len(cells) == 0:
        return None
    world = _local_to_world(cont, cells)
    if occupied is None:
        occupied = [(o.x, o.y, o.radius) for o in scene.objects
                    if o.movable and o.id != obj.id and o.workspace_id == cont.workspace_id]
    ok = np.ones(len(world), dtype=bool)
    for x, y, r in occupied:
        ok &= np.hypot(world[:, 0] - x, world[:, 1] - y) >= r + obj.radius + PACK_MARGIN + snap
    idx = np.nonzero(ok)[0]
    if len(idx) == 0:
        return None
    return tuple(world[idx[0]])


def capacity_ok(scene: Scene) -> bool:
    """Whether every target can be given a distinct goal location."""
    goal = scene.goal
    used_centers: set[int] = set()
    packed: dict[int, list] = {}
    for t in goal.targets:
        obj = scene.obj(t)
        accept = goal.accept.get(t, [])
        if not accept:
            return False
        cont = scene.obj(accept[0])
        if cont.container.kind in CENTER_KINDS:
            free = [c for c in accept if c not in used_centers]
            if not free:
                return False
            used_centers.add(free[0])
            continue
        occ = packed.setdefault(cont.id, [
            (o.x, o.y, o.radius) for o in scene.objects
            if o.movable and o.workspace_id == cont.workspace_id and o.id not in goal.targets
        ])
        cell = free_cell(scene, cont, obj, occupied=occ)
        if cell is None:
            return False
        occ.append((cell[0], cell[1], obj.radius))
    return True


def heading(obj: SimObject) -> float:
    """Ground-plane heading of the object's x axis (its yaw when untilted)."""
    R = obj.rotation()
    return math.atan2(R[1, 0], R[0, 0])


def _yaw_index(scene: Scene, obj: SimObject, cont: SimObject) -> int:
    """Turn that aligns the object with the container, up to the object's symmetry."""
    period = 2 * np.pi / max(obj.symmetry, 1)
    delta = float(geo.wrap_angle(heading(cont) - obj.yaw)) % period
    if delta > period / 2:
        delta -= period
    return int(round(delta / (2 * np.pi / scene.k))) % scene.k


def _destination(scene: Scene, obj: SimObject):
    accept = scene.goal.accept[obj.id]
    first = scene.obj(accept[0])
    if first.container.kind in CENTER_KINDS:
        taken = {o.contained_in for o in scene.objects if o.movable and o.id != obj.id}
        for cid in accept:
            if cid not in taken:
                c = scene.obj(cid)
                return c, (c.x, c.y)
        return first, (first.x, first.y)
    cell = free_cell(scene, first, obj)
    return first, cell if cell is not None else (first.x, first.y)


def oracle(scene: Scene) -> OracleStep | None:
    """Next expert step, or ``None`` when the scene is solved."""
    remaining = [t for t in scene.goal.targets if not satisfied(scene, t)]
    if not remaining:
        return None
    obj = scene.obj(remaining[0])
    if obj.workspace_id is None:
        raise RuntimeError("oracle called while an object is carried")
    pick_ws = obj.workspace_id
    cont, (x, y) = _destination(scene, obj)
    place_ws = cont.workspace_id
    pu, pv = pixel_of(scene, obj.x, obj.y)
    u, v = pixel_of(scene, x, y)
    cx, cy = pixel_center(scene, u, v)
    yaw_index = _yaw_index(scene, obj, cont)
    if cont.tilted:
        roll, pitch = cont.roll, cont.pitch
        z = float(cont.floor_height([[cx, cy]])[0])
    else:
        roll = pitch = 0.0
        new_yaw = obj.yaw + 2 * np.pi * yaw_index / scene.k
        z = support_height(scene, place_ws, obj, cx, cy, new_yaw)
    action = Action(PickPose(pu, pv), PlacePose(u, v, yaw_index, float(roll), float(pitch), float(z)),
                    pick_ws, place_ws)
    return OracleStep(list(scene.gt_steps), action, obj.id, cont.id)


@dataclass
class EpisodeStep:
    obs_pick: Observation
    obs_place: Observation
    action: Action
    events: dict = field(default_factory=dict)


def max_steps(scene: Scene, slack: int = 2) -> int:
    return len(scene.goal.targets) + slack


def run_oracle(scene: Scene, slack: int = 2, record: bool = True) -> list[EpisodeStep]:
    """Roll the expert out to completion (or the step budget), mutating ``scene``."""
    steps: list[EpisodeStep] = []
    for _ in range(max_steps(scene, slack)):
        nxt = oracle(scene)
        if nxt is None:
            break
        act = nxt.action
        scene.goto(act.pick_workspace)
        obs_pick = render(scene, act.pick_workspace) if record else None
        if act.place_workspace == act.pick_workspace:
            obs_place = obs_pick
        else:
            obs_place = render(scene, act.place_workspace) if record else None
        _, events = step(scene, act)
        steps.append(EpisodeStep(obs_pick, obs_place, act, events))
    return steps
