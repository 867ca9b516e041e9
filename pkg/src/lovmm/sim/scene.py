"""Scene state, rendering and quasi-static pick/place dynamics.

Workspace-local frame: origin at the workspace corner, ``x`` along image
columns, ``y`` along image rows; pixel ``(u, v)`` is centred at
``((v + 0.5) * ps, (u + 0.5) * ps)``. Heights are meters above the
workspace surface.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from lovmm.actions import Action, Observation, PlacePose
from lovmm.errors import InvalidSequence, UnknownWorkspace
from lovmm.sim import geometry as geo
from lovmm.vlmap import CameraPose, Frame, RobotPose

SCENE_SIZE = (5.0, 5.0)
WS_EXTENT = (0.4, 0.8)        # (rows/y, cols/x) meters
ANGLE_TOL = math.radians(10)  # seating tolerance on tilted containers
Z_TOL = 0.02
SLOT_POS_TOL = 0.012
SLOT_YAW_TOL = math.radians(15)


@dataclass
class Workspace:
    id: str
    name: str
    room: str
    center: tuple
    yaw: float
    approach: tuple
    approach_yaw: float
    extent: tuple = WS_EXTENT
    surface_height: float = 0.45
    surface_color: tuple = (0.75, 0.72, 0.68)
    texture_seed: int | None = None
    surface_pose: tuple = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    def _half(self) -> np.ndarray:
        return np.array([self.extent[1] / 2, self.extent[0] / 2])

    def local_to_world(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return (pts - self._half()) @ geo.rot2(self.yaw).T + np.asarray(self.center)

    def world_to_local(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return (pts - np.asarray(self.center)) @ geo.rot2(self.yaw) + self._half()

    def footprint_world(self) -> np.ndarray:
        ex, ey = self.extent[1], self.extent[0]
        return self.local_to_world(np.array([[0, 0], [ex, 0], [ex, ey], [0, ey]]))

    def footprint_distance(self, p) -> float:
        local = self.world_to_local(p)[0] - self._half()
        return geo.rect_distance(local, self._half())

    def to_dict(self) -> dict:
        return {
            "id": self.id, "name": self.name, "room": self.room,
            "center": list(self.center), "yaw": self.yaw,
            "approach": list(self.approach), "surface_pose": list(self.surface_pose),
        }


@dataclass
class ContainerSpec:
    kind: str              # box | bowl | basket | bin | plate | slot | cup
    interior: np.ndarray   # polygon in the object frame
    rim: float             # wall height above the floor
    floor: float = 0.004   # floor thickness
    accepts: str | None = None

    @property
    def tilted(self) -> bool:
        return False


@dataclass
class SimObject:
    id: int
    name: str
    category: str
    footprint: np.ndarray
    height: float
    color: tuple
    workspace_id: str | None
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0
    attrs: dict = field(default_factory=dict)
    movable: bool = True
    container: ContainerSpec | None = None
    symmetry: int = 1
    contained_in: int | None = None

    @property
    def volume(self) -> float:
        return geo.polygon_area(self.footprint) * self.height

    @property
    def radius(self) -> float:
        return geo.radius(self.footprint)

    @property
    def tilted(self) -> bool:
        return abs(self.roll) > 1e-9 or abs(self.pitch) > 1e-9

    def world_footprint(self) -> np.ndarray:
        return geo.transform(self.footprint, self.x, self.y, self.yaw)

    def pose(self) -> list[float]:
        return [self.x, self.y, self.z, self.roll, self.pitch, self.yaw]

    # -- container geometry -------------------------------------------------
    def rotation(self) -> np.ndarray:
        return geo.rot3(self.roll, self.pitch, self.yaw)

    def plane_height(self, pts) -> np.ndarray:
        """Height of this object's base plane above each ``(x, y)`` point."""
        pts = np.atleast_2d(pts)
        n = self.rotation()[:, 2]
        return self.z - (n[0] * (pts[:, 0] - self.x) + n[1] * (pts[:, 1] - self.y)) / n[2]

    def to_local(self, pts, z=None) -> np.ndarray:
        """World ``(x, y[, z])`` -> object frame ``(lx, ly, lz)``; ``z`` defaults to the base plane."""
        pts = np.atleast_2d(pts)
        zz = self.plane_height(pts) if z is None else np.broadcast_to(z, (len(pts),))
        p3 = np.column_stack([pts[:, 0] - self.x, pts[:, 1] - self.y, zz - self.z])
        return p3 @ self.rotation()

    def floor_height(self, pts) -> np.ndarray:
        n = self.rotation()[:, 2]
        return self.plane_height(pts) + self.container.floor / n[2]

    def surface(self, pts) -> np.ndarray:
        """Top height over each point, NaN where this object does not cover it."""
        pts = np.atleast_2d(pts)
        out = np.full(len(pts), np.nan)
        if self.container is None:
            inside = geo.contains(self.world_footprint(), pts)
            out[inside] = self.z + self.height
            return out
        local = self.to_local(pts)[:, :2]
        inner = geo.contains(self.container.interior, local)
        outer = geo.contains(self.footprint, local)
        n = self.rotation()[:, 2]
        base = self.plane_height(pts)
        out[outer] = base[outer] + (self.container.floor + self.container.rim) / n[2]
        out[inner] = base[inner] + self.container.floor / n[2]
        return out

    def to_dict(self) -> dict:
        d = {
            "id": self.id, "name": self.name, "category": self.category,
            "attrs": self.attrs, "workspace_id": self.workspace_id,
            "pose": [float(p) for p in self.pose()], "height": self.height,
            "volume": self.volume, "movable": self.movable,
        }
        if self.container is not None:
            d["container"] = {"kind": self.container.kind, "rim": self.container.rim,
                              "accepts": self.container.accepts}
        return d


@dataclass
class Goal:
    kind: str                      # volume_in_container | count_in_slots | count_matched
    targets: list[int]
    accept: dict[int, list[int]]   # target id -> container ids that satisfy it

    def weight(self, obj: SimObject) -> float:
        return obj.volume if self.kind == "volume_in_container" else 1.0


@dataclass
class GroundTruthStep:
    role: str
    workspace: str
    workspace_id: str


@dataclass
class Scene:
    task_id: str
    seed: int
    instruction: str
    workspaces: list[Workspace]
    objects: list[SimObject]
    goal: Goal
    robot: RobotPose
    gt_steps: list[GroundTruthStep]
    placeholders: dict
    rooms: dict = field(default_factory=dict)
    H: int = 80
    W: int = 160
    k: int = 36
    carried: int | None = None
    log: list = field(default_factory=list)

    @property
    def pixel_size(self) -> float:
        return WS_EXTENT[0] / self.H

    def workspace(self, ws_id: str) -> Workspace:
        for ws in self.workspaces:
            if ws.id == ws_id:
                return ws
        raise UnknownWorkspace(ws_id)

    def workspace_by_name(self, name: str) -> Workspace:
        for ws in self.workspaces:
            if ws.name == name:
                return ws
        raise UnknownWorkspace(name)

    def obj(self, oid: int) -> SimObject:
        return self.objects[oid]

    def items_on(self, ws_id: str) -> list[SimObject]:
        return [o for o in self.objects if o.workspace_id == ws_id]

    @property
    def is_solved(self) -> bool:
        return all(satisfied(self, t) for t in self.goal.targets)

    def goto(self, ws_id: str) -> RobotPose:
        """Ground-truth navigation (used by the scripted expert and replay)."""
        ws = self.workspace(ws_id)
        self.robot = RobotPose(float(ws.approach[0]), float(ws.approach[1]), ws.approach_yaw, ws.id)
        return self.robot

    def state_digest(self) -> list:
        return [(o.id, o.workspace_id, tuple(round(p, 9) for p in o.pose())) for o in self.objects]


# ---------------------------------------------------------------------------
# rendering


def pixel_centers(H: int, W: int, ps: float) -> np.ndarray:
    rows, cols = np.mgrid[0:H, 0:W]
    return np.column_stack([((cols + 0.5) * ps).ravel(), ((rows + 0.5) * ps).ravel()])


def _texture(ws: Workspace, H: int, W: int) -> np.ndarray:
    rng = np.random.default_rng(ws.texture_seed)
    rows, cols = np.mgrid[0:H, 0:W]
    tex = np.zeros((H, W))
    for _ in range(3):
        fr, fc, ph = rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4), rng.uniform(0, 2 * np.pi)
        tex += np.sin(fr * rows + fc * cols + ph)
    return 0.08 * tex / 3


def _ordered_items(scene: Scene, ws_id: str) -> list[SimObject]:
    items = scene.items_on(ws_id)
    fixed = [o for o in items if not o.movable]
    movable = sorted((o for o in items if o.movable), key=lambda o: (o.z, o.id))
    return fixed + movable


def render(scene: Scene, ws_id: str, H: int | None = None, W: int | None = None) -> Observation:
    """Rasterize one workspace into color, height-above-surface depth and labels."""
    ws = scene.workspace(ws_id)
    H = H or scene.H
    W = W or scene.W
    ps = WS_EXTENT[0] / H
    color = np.empty((H, W, 3))
    color[:] = ws.surface_color
    if ws.texture_seed is not None:
        color += _texture(ws, H, W)[..., None]
    depth = np.zeros(H * W)
    labels = np.zeros(H * W, dtype=np.int16)
    names = [ws.name]
    color = color.reshape(-1, 3)
    pts = pixel_centers(H, W, ps)
    for item in _ordered_items(scene, ws_id):
        r = item.radius * (1.5 if item.tilted else 1.0) + ps
        sel = np.nonzero((np.abs(pts[:, 0] - item.x) <= r) & (np.abs(pts[:, 1] - item.y) <= r))[0]
        if len(sel) == 0:
            continue
        top = item.surface(pts[sel])
        hit = ~np.isnan(top)
        if item.movable:
            hit &= top >= depth[sel] - 1e-9
        sel, top = sel[hit], top[hit]
        if item.container is not None and not item.movable:
            local = item.to_local(pts[sel])[:, :2]
            inner = geo.contains(item.container.interior, local)
            shade = np.where(inner, 0.8, 1.0)[:, None]
            color[sel] = np.asarray(item.color) * shade
        else:
            color[sel] = item.color
        depth[sel] = top
        labels[sel] = len(names)
        names.append(item.name)
    return Observation(
        color=np.clip(color.reshape(H, W, 3), 0.0, 1.0),
        depth=depth.reshape(H, W),
        pixel_size=ps,
        workspace_id=ws_id,
        labels=labels.reshape(H, W),
        label_names=names,
    )


def scene_frames(scene: Scene, pixel_size: float = 0.05, tiles: int = 2,
                 camera_height: float = 3.0) -> list[Frame]:
    """Posed top-down frames of the whole scene for map building.

    Labels are workspace names on workspace footprints and ``floor``
    elsewhere.
    """
    sx, sy = SCENE_SIZE
    tw, th = sx / tiles, sy / tiles
    n_w, n_h = int(round(tw / pixel_size)), int(round(th / pixel_size))
    names = ["floor"] + [ws.name for ws in scene.workspaces]
    frames = []
    for ti in range(tiles):
        for tj in range(tiles):
            cx, cy = (tj + 0.5) * tw, (ti + 0.5) * th
            rows, cols = np.mgrid[0:n_h, 0:n_w]
            pts = np.column_stack([
                (cx + (cols + 0.5 - n_w / 2) * pixel_size).ravel(),
                (cy + (rows + 0.5 - n_h / 2) * pixel_size).ravel(),
            ])
            height = np.zeros(len(pts))
            color = np.tile([0.55, 0.55, 0.55], (len(pts), 1))
            labels = np.zeros(len(pts), dtype=np.int16)
            for i, ws in enumerate(scene.workspaces):
                inside = geo.contains(ws.footprint_world(), pts)
                height[inside] = ws.surface_height
                color[inside] = ws.surface_color
                labels[inside] = i + 1
            frames.append(Frame(
                image=color.reshape(n_h, n_w, 3),
                depth=(camera_height - height).reshape(n_h, n_w),
                pose=CameraPose(cx, cy, camera_height, 0.0),
                pixel_size=pixel_size,
                labels=labels.reshape(n_h, n_w),
                label_names=names,
            ))
    return frames


# ---------------------------------------------------------------------------
# dynamics


def fixed_surface(scene: Scene, ws_id: str, pts, exclude: int | None = None) -> np.ndarray:
    """Support height at each point from fixed items (painter order) and the surface."""
    pts = np.atleast_2d(pts)
    h = np.zeros(len(pts))
    for item in scene.items_on(ws_id):
        if item.movable or item.id == exclude:
            continue
        top = item.surface(pts)
        hit = ~np.isnan(top)
        h[hit] = top[hit]
    return h


def top_item(scene: Scene, ws_id: str, point) -> tuple[SimObject | None, float]:
    """The item whose top is highest at ``point`` (fixed items in painter order)."""
    point = np.atleast_2d(point)
    best, best_h = None, 0.0
    for item in scene.items_on(ws_id):
        if item.movable:
            continue
        top = item.surface(point)[0]
        if not np.isnan(top):
            best, best_h = item, top
    for item in sorted((o for o in scene.items_on(ws_id) if o.movable), key=lambda o: (o.z, o.id)):
        top = item.surface(point)[0]
        if not np.isnan(top) and top >= best_h - 1e-9:
            best, best_h = item, top
    return best, best_h


def support_height(scene: Scene, ws_id: str, obj: SimObject, x: float, y: float, yaw: float) -> float:
    samples = np.vstack([[x, y], geo.transform(obj.footprint * 0.85, x, y, yaw)])
    h = fixed_surface(scene, ws_id, samples)
    for item in scene.items_on(ws_id):
        if item.movable and item.id != obj.id:
            top = item.surface(samples)
            hit = ~np.isnan(top)
            h[hit] = np.maximum(h[hit], top[hit])
    return float(h.max())


def _movable_support(scene: Scene, ws_id: str, obj: SimObject, x: float, y: float, yaw: float) -> float:
    samples = np.vstack([[x, y], geo.transform(obj.footprint * 0.85, x, y, yaw)])
    h = 0.0
    for item in scene.items_on(ws_id):
        if item.movable and item.id != obj.id:
            top = item.surface(samples)
            if not np.all(np.isnan(top)):
                h = max(h, float(np.nanmax(top)))
    return h


def container_under(scene: Scene, ws_id: str, x: float, y: float) -> SimObject | None:
    for item in scene.items_on(ws_id):
        if item.container is None or item.movable:
            continue
        local = item.to_local([[x, y]])[:, :2]
        if geo.contains(item.container.interior, local)[0]:
            return item
    return None


def _inside(scene: Scene, obj: SimObject, cont: SimObject) -> bool:
    spec = cont.container
    if spec.kind == "slot":
        if np.hypot(obj.x - cont.x, obj.y - cont.y) > SLOT_POS_TOL:
            return False
        return geo.symmetric_delta(obj.yaw, cont.yaw, obj.symmetry) <= SLOT_YAW_TOL
    cz = obj.z + obj.height / 2
    local = cont.to_local([[obj.x, obj.y]], z=cz)[0]
    if not geo.contains(spec.interior, local[None, :2])[0]:
        return False
    return spec.floor <= local[2] + 1e-9 and local[2] - spec.floor < spec.rim


def update_containment(scene: Scene, obj: SimObject) -> None:
    obj.contained_in = None
    if obj.workspace_id is None:
        return
    for cont in scene.items_on(obj.workspace_id):
        if cont.container is not None and not cont.movable and _inside(scene, obj, cont):
            obj.contained_in = cont.id
            return


def satisfied(scene: Scene, oid: int) -> bool:
    obj = scene.obj(oid)
    return obj.workspace_id is not None and obj.contained_in in scene.goal.accept.get(oid, [])


def score(scene: Scene) -> float:
    """Task success rate in [0, 1]: satisfied targets weighted by volume or count."""
    goal = scene.goal
    total = sum(goal.weight(scene.obj(t)) for t in goal.targets)
    if total <= 0:
        return 0.0
    got = sum(goal.weight(scene.obj(t)) for t in goal.targets if satisfied(scene, t))
    return float(got / total)


def _require_robot_at(scene: Scene, ws_id: str) -> None:
    scene.workspace(ws_id)
    if scene.robot.workspace_id != ws_id:
        raise InvalidSequence(f"robot is at {scene.robot.workspace_id!r}, not {ws_id!r}")


def pick(scene: Scene, ws_id: str, u: int, v: int) -> dict:
    """Suction pick of the topmost movable item under pixel ``(u, v)``; a miss is a no-op."""
    _require_robot_at(scene, ws_id)
    if scene.carried is not None:
        raise InvalidSequence("already carrying an object")
    ps = scene.pixel_size
    point = np.array([(v + 0.5) * ps, (u + 0.5) * ps])
    item, _ = top_item(scene, ws_id, point)
    if item is None or not item.movable:
        scene.log.append({"pick": [int(u), int(v)], "picked": None})
        return {"picked": None}
    item.workspace_id = None
    item.contained_in = None
    scene.carried = item.id
    # anything that was resting on it drops onto what lies below
    for other in scene.items_on(ws_id):
        if other.movable and other.z > 1e-9:
            z = support_height(scene, ws_id, other, other.x, other.y, other.yaw)
            if z < other.z - 1e-9:
                other.z = z
                update_containment(scene, other)
    scene.log.append({"pick": [int(u), int(v)], "picked": item.id})
    return {"picked": item.id}


def place(scene: Scene, ws_id: str, pose: PlacePose) -> dict:
    """Release the carried object at ``pose`` and let it settle."""
    _require_robot_at(scene, ws_id)
    if scene.carried is None:
        raise InvalidSequence("place called with nothing carried")
    obj = scene.obj(scene.carried)
    ps = scene.pixel_size
    ws = scene.workspace(ws_id)
    u = int(np.clip(pose.u, 0, scene.H - 1))
    v = int(np.clip(pose.v, 0, scene.W - 1))
    x, y = (v + 0.5) * ps, (u + 0.5) * ps
    yaw = float(geo.wrap_angle(obj.yaw + 2 * np.pi * (pose.yaw_index % scene.k) / scene.k))
    cont = container_under(scene, ws_id, x, y)
    obj.workspace_id = ws_id
    scene.carried = None
    event = "surface"
    if cont is not None and cont.tilted:
        floor = float(cont.floor_height([[x, y]])[0])
        seated = (abs(pose.roll - cont.roll) <= ANGLE_TOL and abs(pose.pitch - cont.pitch) <= ANGLE_TOL
                  and abs(pose.z - floor) <= Z_TOL)
        if seated:
            # the object tilts with the container, so it rests on the floor plane at its centroid
            obj.x, obj.y, obj.yaw = x, y, yaw
            obj.roll, obj.pitch = cont.roll, cont.pitch
            obj.z = max(floor, _movable_support(scene, ws_id, obj, x, y, yaw))
        else:
            _slide_off(scene, ws, obj, cont, yaw)
            event = "slid_off"
    else:
        obj.x, obj.y, obj.yaw = x, y, yaw
        obj.roll = obj.pitch = 0.0
        obj.z = support_height(scene, ws_id, obj, x, y, yaw)
    update_containment(scene, obj)
    if obj.contained_in is not None:
        placed_in = f"container:{obj.contained_in}"
    elif event == "slid_off":
        placed_in = "floor" if _outside_extent(ws, obj) else "surface"
    else:
        placed_in = "surface"
    scene.log.append({"place": [u, v, int(pose.yaw_index)], "object": obj.id, "placed_in": placed_in})
    return {"object": obj.id, "placed_in": placed_in}


def _outside_extent(ws: Workspace, obj: SimObject) -> bool:
    return not (0 <= obj.x <= ws.extent[1] and 0 <= obj.y <= ws.extent[0])


def _slide_off(scene: Scene, ws: Workspace, obj: SimObject, cont: SimObject, yaw: float) -> None:
    """Unseated object on a tilted container slides past the downhill rim."""
    n = cont.rotation()[:, 2]
    downhill = np.array([n[0], n[1]])
    norm = np.linalg.norm(downhill)
    downhill = downhill / norm if norm > 1e-9 else np.array([1.0, 0.0])
    dist = cont.radius + obj.radius + 0.005
    x, y = np.array([cont.x, cont.y]) + dist * downhill
    r = obj.radius
    obj.x = float(np.clip(x, r, ws.extent[1] - r))
    obj.y = float(np.clip(y, r, ws.extent[0] - r))
    obj.yaw = yaw
    obj.roll = obj.pitch = 0.0
    obj.z = support_height(scene, ws.id, obj, obj.x, obj.y, yaw)


def step(scene: Scene, action: Action, navigate: bool = False) -> tuple[Scene, dict]:
    """Execute one pick-and-place. Mutates and returns ``scene``.

    With ``navigate=True`` the robot is moved to each workspace with
    ground-truth navigation; otherwise it must already be at the pick
    workspace and, for cross-workspace actions, is moved by the caller.
    """
    if navigate:
        scene.goto(action.pick_workspace)
    ev = pick(scene, action.pick_workspace, action.pick.u, action.pick.v)
    events = {"picked": ev["picked"], "placed_in": None}
    if ev["picked"] is None:
        return scene, events
    if action.place_workspace != action.pick_workspace:
        scene.goto(action.place_workspace)
    ev = place(scene, action.place_workspace, action.place)
    events["placed_in"] = ev["placed_in"]
    return scene, events
