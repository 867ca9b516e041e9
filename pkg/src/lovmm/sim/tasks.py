"""The 16 benchmark tasks: instruction templates, vocabularies and scene builders.

Each task card expands its template over verb and placeholder
vocabularies. ``generate_scene`` lays out named workspaces on a 5 m x 5 m
floor, spawns targets, distractors and fixtures, and records the ground
truth the parser and scorer are checked against.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from lovmm.errors import ConfigError, PlacementFailure
from lovmm.sim import geometry as geo
from lovmm.sim.scene import (
    SCENE_SIZE,
    ContainerSpec,
    Goal,
    GroundTruthStep,
    Scene,
    SimObject,
    Workspace,
)
from lovmm.vlmap import RobotPose

COLORS = {
    "red": (0.85, 0.15, 0.15),
    "green": (0.2, 0.65, 0.25),
    "blue": (0.2, 0.35, 0.9),
    "yellow": (0.95, 0.85, 0.2),
    "orange": (1.0, 0.55, 0.1),
    "purple": (0.55, 0.25, 0.75),
    "pink": (0.95, 0.5, 0.7),
    "white": (0.95, 0.95, 0.95),
    "brown": (0.5, 0.32, 0.15),
    "grey": (0.5, 0.5, 0.5),
    "black": (0.12, 0.12, 0.12),
    "cyan": (0.2, 0.8, 0.85),
}
BLOCK_COLORS = ("red", "green", "blue", "yellow", "orange", "purple")

# plural noun -> (footprint, height, color)
SCAN_OBJECTS = {
    "alarm clocks": (geo.circle(0.03), 0.05, COLORS["white"]),
    "toy rockets": (geo.rect(0.07, 0.035), 0.04, COLORS["red"]),
    "android figures": (geo.regular_polygon(6, 0.028), 0.05, COLORS["green"]),
    "dinosaur figures": (geo.star(0.032), 0.04, COLORS["purple"]),
    "soap bars": (geo.rect(0.06, 0.035), 0.025, COLORS["cyan"]),
    "coffee mugs": (geo.circle(0.032), 0.06, COLORS["brown"]),
}
SHAPE_PLURALS = {
    "stars": "star", "hexagons": "hexagon", "triangles": "triangle", "squares": "square",
    "pentagons": "pentagon", "crosses": "cross", "hearts": "heart", "diamonds": "diamond",
}
KIT_SHAPES = ("star", "hexagon", "triangle", "square", "pentagon", "cross", "heart", "diamond")
SHOES = {
    "sneakers": (geo.rect(0.10, 0.04), 0.04, COLORS["white"]),
    "boots": (geo.rect(0.11, 0.045), 0.06, COLORS["brown"]),
    "sandals": (geo.rect(0.09, 0.035), 0.02, (0.85, 0.7, 0.45)),
    "slippers": (geo.rect(0.095, 0.04), 0.025, COLORS["pink"]),
}
TOYS = {
    "toy cars": (geo.rect(0.07, 0.035), 0.03, COLORS["red"]),
    "rubber ducks": (geo.circle(0.025), 0.035, COLORS["yellow"]),
    "teddy bears": (geo.heart(0.055), 0.04, COLORS["brown"]),
    "toy blocks": (geo.square(0.035), 0.035, COLORS["orange"]),
}
TOY_CONTAINERS = {
    "white basket": (geo.rect(0.21, 0.17), geo.rect(0.19, 0.15), 0.06, COLORS["white"]),
    "blue bin": (geo.circle(0.1), geo.circle(0.09), 0.07, COLORS["blue"]),
    "brown box": (geo.square(0.19), geo.square(0.17), 0.08, COLORS["brown"]),
}
TOWEL_COLORS = ("red", "blue", "green", "yellow", "white", "pink")
PLATE_COLORS = ("yellow", "blue", "green", "white", "pink", "orange")
CUP_COLORS = ("red", "green", "blue", "yellow", "purple")

DISTRACTOR_WORKSPACES = (
    "kitchen counter", "hallway shelf", "study cabinet", "dining table", "tv stand",
)
GROUND_WORKSPACES = {
    "living room carpet", "laundry room", "corner", "living room corner",
    "bedroom ground", "drawer dresser",
}
TEXTURED_WORKSPACES = {"living room carpet"}
SURFACE_COLORS = {
    "bedroom sofa": (0.55, 0.6, 0.72), "bedroom chair": (0.7, 0.62, 0.5),
    "living room carpet": (0.62, 0.5, 0.45), "balcony bed": (0.8, 0.78, 0.7),
    "bed": (0.78, 0.76, 0.82), "table in the guest room": (0.6, 0.48, 0.35),
    "laundry room": (0.7, 0.72, 0.7), "bathroom sink": (0.82, 0.85, 0.88),
    "office room desk": (0.58, 0.45, 0.32), "corner": (0.66, 0.66, 0.62),
    "living room corner": (0.64, 0.6, 0.56), "bedroom ground": (0.68, 0.6, 0.5),
    "drawer dresser": (0.6, 0.56, 0.5), "kitchen pantry basket": (0.72, 0.62, 0.42),
    "living room table": (0.55, 0.42, 0.3),
}


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    letter: str
    title: str
    template: str                  # fields: {verb} plus task placeholders
    verbs: tuple[str, ...]
    vocab: dict[str, tuple[str, ...]]
    pick_ws: str
    place_ws: str
    seen: bool
    goal_kind: str
    builder: Callable = field(repr=False, compare=False, default=None)
    six_dof: bool = False
    tilt_range: float = 0.0
    lift_max: float = 0.0

    @property
    def cross_workspace(self) -> bool:
        return self.pick_ws != self.place_ws

    def expansions(self):
        """Every (instruction, placeholder values) of the template."""
        keys = list(self.vocab)
        for verb in self.verbs:
            for combo in itertools.product(*(self.vocab[k] for k in keys)):
                values = {"verb": verb, **dict(zip(keys, combo))}
                yield self.template.format(**values), values

    def sample_values(self, rng: np.random.Generator) -> dict:
        values = {"verb": self.verbs[int(rng.integers(len(self.verbs)))]}
        for key, options in self.vocab.items():
            values[key] = options[int(rng.integers(len(options)))]
        return values


class _Retry(Exception):
    pass


class _Builder:
    """Spawns objects on workspaces without overlap."""

    def __init__(self, rng: np.random.Generator, workspaces: dict[str, Workspace]):
        self.rng = rng
        self.ws = workspaces
        self.objects: list[SimObject] = []

    def add(self, ws_name: str, name: str, category: str, footprint, height: float, color,
            *, movable: bool = True, container: ContainerSpec | None = None, symmetry: int = 1,
            attrs: dict | None = None, at=None, yaw=None, roll=0.0, pitch=0.0, z=0.0,
            margin: float = 0.006) -> SimObject:
        ws = self.ws[ws_name]
        r = geo.radius(footprint)
        ex, ey = ws.extent[1], ws.extent[0]
        if yaw is None:
            yaw = float(self.rng.uniform(-np.pi, np.pi))
        if at is None:
            half = np.abs(np.asarray(footprint) @ geo.rot2(yaw).T).max(axis=0)
            if half[0] + 0.01 > ex / 2 or half[1] + 0.01 > ey / 2:
                raise _Retry(f"{name} does not fit on {ws_name}")
            for _ in range(300):
                x = float(self.rng.uniform(half[0] + 0.01, ex - half[0] - 0.01))
                y = float(self.rng.uniform(half[1] + 0.01, ey - half[1] - 0.01))
                if self._free(ws.id, x, y, r, margin):
                    break
            else:
                raise _Retry(f"no room for {name} on {ws_name}")
        else:
            x, y = at
        obj = SimObject(
            id=len(self.objects), name=name, category=category, footprint=np.asarray(footprint),
            height=height, color=tuple(color), workspace_id=ws.id, x=x, y=y, z=z,
            roll=roll, pitch=pitch, yaw=float(yaw), attrs=dict(attrs or {}), movable=movable,
            container=container, symmetry=symmetry,
        )
        self.objects.append(obj)
        return obj

    def _free(self, ws_id: str, x: float, y: float, r: float, margin: float) -> bool:
        for o in self.objects:
            if o.workspace_id != ws_id or o.attrs.get("nested"):
                continue
            if math.hypot(o.x - x, o.y - y) < o.radius + r + margin:
                return False
        return True

    def container(self, ws_name: str, name: str, kind: str, outer, inner, rim: float, color,
                  *, accepts: str | None = None, tilt: float = 0.0, lift_max: float = 0.0,
                  floor: float = 0.004, at=None, yaw=None, attrs=None) -> SimObject:
        roll = pitch = 0.0
        z = 0.0
        if tilt > 0:
            roll = float(self.rng.uniform(-tilt, tilt))
            pitch = float(self.rng.uniform(-tilt, tilt))
            drop = geo.radius(outer) * math.tan(max(abs(roll), abs(pitch)))
            z = float(self.rng.uniform(min(lift_max, drop), lift_max))
        return self.add(
            ws_name, name, kind, outer, 0.0, color, movable=False,
            container=ContainerSpec(kind, np.asarray(inner), rim, floor, accepts),
            roll=roll, pitch=pitch, z=z, at=at, yaw=0.0 if yaw is None else yaw,
            margin=0.015, attrs=attrs,
        )

    def n(self, lo: int, hi: int) -> int:
        return int(self.rng.integers(lo, hi + 1))


# ---------------------------------------------------------------------------
# per-task builders; each returns (targets, accept)


def _pack_into(b: _Builder, targets, container) -> tuple[list[int], dict]:
    return [t.id for t in targets], {t.id: [container.id] for t in targets}


def _build_pack_blocks(b: _Builder, spec: TaskSpec, v: dict, n_distract: int):
    color = v["color"]
    box = b.container(spec.place_ws, "brown box", "box", geo.square(0.21), geo.square(0.19), 0.08,
                      COLORS["brown"])
    targets = []
    for _ in range(b.n(2, 3)):
        s = float(b.rng.uniform(0.032, 0.042))
        targets.append(b.add(spec.pick_ws, f"{color} block", "block", geo.square(s), s,
                             COLORS[color], symmetry=4, attrs={"color": color}))
    others = [c for c in BLOCK_COLORS if c != color]
    for _ in range(n_distract):
        c = others[int(b.rng.integers(len(others)))]
        s = float(b.rng.uniform(0.032, 0.042))
        b.add(spec.pick_ws, f"{c} block", "block", geo.square(s), s, COLORS[c], symmetry=4,
              attrs={"color": c})
    return _pack_into(b, targets, box)


def _build_pack_objects(b: _Builder, spec: TaskSpec, v: dict, n_distract: int):
    kind = v["objects"]
    box = b.container(spec.place_ws, "brown box", "box", geo.square(0.21), geo.square(0.19), 0.08,
                      COLORS["brown"])
    fp, h, col = SCAN_OBJECTS[kind]
    targets = [b.add(spec.pick_ws, kind[:-1], kind, fp, h, col) for _ in range(b.n(2, 3))]
    others = [k for k in SCAN_OBJECTS if k != kind]
    for _ in range(n_distract):
        k = others[int(b.rng.integers(len(others)))]
        fp, h, col = SCAN_OBJECTS[k]
        b.add(spec.pick_ws, k[:-1], k, fp, h, col)
    return _pack_into(b, targets, box)


def _shape_object(b: _Builder, ws: str, shape: str, color: str, size: float = 0.05):
    factory, sym = geo.SHAPES[shape]
    return b.add(ws, f"{color} {shape}", shape, factory(size), 0.02, COLORS[color], symmetry=sym,
                 attrs={"shape": shape, "color": color})


def _build_kit(b: _Builder, spec: TaskSpec, v: dict, n_distract: int):
    shape = v["shapes"]
    board = b.add(spec.place_ws, "brown board", "board", geo.rect(0.32, 0.12), 0.01,
                  COLORS["brown"], movable=False, yaw=0.0, margin=0.01)
    others = [s for s in KIT_SHAPES if s != shape]
    hole_shapes = [shape] + list(b.rng.choice(others, size=3, replace=False))
    b.rng.shuffle(hole_shapes)
    holes = []
    for i, hs in enumerate(hole_shapes):
        factory, sym = geo.SHAPES[hs]
        poly = factory(0.05) * 1.1
        yaw = float(b.rng.integers(0, 4)) * np.pi / 2
        holes.append(b.add(
            spec.place_ws, f"{hs} hole", "hole", poly, 0.0, (0.22, 0.16, 0.1), movable=False,
            container=ContainerSpec("slot", poly, 0.01, 0.0, hs), symmetry=sym,
            at=(board.x - 0.12 + 0.08 * i, board.y), yaw=yaw, attrs={"shape": hs, "nested": True},
        ))
    color = BLOCK_COLORS[int(b.rng.integers(len(BLOCK_COLORS)))]
    target = _shape_object(b, spec.pick_ws, shape, color)
    for hs in hole_shapes[:n_distract]:
        if hs != shape:
            c = BLOCK_COLORS[int(b.rng.integers(len(BLOCK_COLORS)))]
            _shape_object(b, spec.pick_ws, hs, c)
    accept = [h.id for h in holes if h.container.accepts == shape]
    return [target.id], {target.id: accept}


def _build_pack_shapes(b: _Builder, spec: TaskSpec, v: dict, n_distract: int):
    shape = SHAPE_PLURALS[v["shapes"]]
    box = b.container(spec.place_ws, "brown box", "box", geo.square(0.21), geo.square(0.19), 0.08,
                      COLORS["brown"], tilt=spec.tilt_range, lift_max=spec.lift_max)
    targets = []
    for _ in range(b.n(2, 3)):
        c = BLOCK_COLORS[int(b.rng.integers(len(BLOCK_COLORS)))]
        targets.append(_shape_object(b, spec.pick_ws, shape, c, 0.045))
    others = [s for s in KIT_SHAPES if s != shape]
    for _ in range(n_distract):
        s = others[int(b.rng.integers(len(others)))]
        c = BLOCK_COLORS[int(b.rng.integers(len(BLOCK_COLORS)))]
        _shape_object(b, spec.pick_ws, s, c, 0.045)
    return _pack_into(b, targets, box)


def _build_bowls(b: _Builder, spec: TaskSpec, v: dict, n_distract: int):
    color = v["color"]
    n_t = b.n(1, 2)
    others = [c for c in BLOCK_COLORS if c != color]
    bowl_colors = [color] * n_t + list(b.rng.choice(others, size=2, replace=False))
    bowls = [
        b.container(spec.place_ws, f"{c} bowl", "bowl", geo.circle(0.055), geo.circle(0.046), 0.03,
                    COLORS[c], accepts=c, tilt=spec.tilt_range, lift_max=spec.lift_max)
        for c in bowl_colors
    ]
    targets = [b.add(spec.pick_ws, f"{color} block", "block", geo.square(0.035), 0.035,
                     COLORS[color], symmetry=4, attrs={"color": color}) for _ in range(n_t)]
    for _ in range(n_distract):
        c = others[int(b.rng.integers(len(others)))]
        b.add(spec.pick_ws, f"{c} block", "block", geo.square(0.035), 0.035, COLORS[c], symmetry=4,
              attrs={"color": c})
    match = [bw.id for bw in bowls if bw.container.accepts == color]
    return [t.id for t in targets], {t.id: match for t in targets}


def _build_bottles(b: _Builder, spec: TaskSpec, v: dict, n_distract: int):
    box = b.container(spec.place_ws, "brown wood box", "box", geo.rect(0.22, 0.18),
                      geo.rect(0.2, 0.16), 0.06, (0.6, 0.4, 0.22))
    targets = []
    for _ in range(b.n(3, 4)):
        r = float(b.rng.uniform(0.018, 0.024))
        col = [COLORS["white"], COLORS["orange"], (0.45, 0.3, 0.15)][int(b.rng.integers(3))]
        targets.append(b.add(spec.pick_ws, "supplement bottle", "bottle", geo.circle(r),
                             float(b.rng.uniform(0.07, 0.1)), col, symmetry=36))
    clutter = [("phone", geo.rect(0.07, 0.035), 0.01, COLORS["black"]),
               ("book", geo.rect(0.09, 0.065), 0.02, COLORS["blue"]),
               ("glasses case", geo.rect(0.07, 0.03), 0.025, COLORS["green"])]
    for i in range(n_distract):
        name, fp, h, col = clutter[i % len(clutter)]
        b.add(spec.pick_ws, name, "clutter", fp, h, col)
    return _pack_into(b, targets, box)


def _build_shoes(b: _Builder, spec: TaskSpec, v: dict, n_distract: int):
    kind = v["shoes"]
    basket = b.container(spec.place_ws, "black basket", "basket", geo.rect(0.36, 0.28),
                         geo.rect(0.34, 0.26), 0.07, COLORS["black"])
    fp, h, col = SHOES[kind]
    targets = [b.add(spec.pick_ws, kind[:-1], kind, fp, h, col) for _ in range(2)]
    others = [k for k in SHOES if k != kind]
    for _ in range(n_distract):
        k = others[int(b.rng.integers(len(others)))]
        fp, h, col = SHOES[k]
        b.add(spec.pick_ws, k[:-1], k, fp, h, col)
    return _pack_into(b, targets, basket)


def _build_food(b: _Builder, spec: TaskSpec, v: dict, n_distract: int):
    bin_ = b.container(spec.place_ws, "grey trash bin", "bin", geo.circle(0.13), geo.circle(0.12),
                       0.10, COLORS["grey"])
    kinds = [(geo.rect(0.07, 0.03), 0.09), (geo.rect(0.06, 0.04), 0.05), (geo.square(0.05), 0.05)]
    palette = [COLORS["yellow"], COLORS["red"], COLORS["orange"], (0.3, 0.55, 0.3)]
    targets = []
    for _ in range(b.n(2, 3)):
        fp, h = kinds[int(b.rng.integers(len(kinds)))]
        targets.append(b.add(spec.pick_ws, "food box", "food box", fp, h,
                             palette[int(b.rng.integers(len(palette)))]))
    clutter = [("soda can", geo.circle(0.02), 0.07, COLORS["cyan"]),
               ("mug", geo.circle(0.03), 0.06, COLORS["white"]),
               ("notebook", geo.rect(0.09, 0.065), 0.012, COLORS["purple"])]
    for i in range(n_distract):
        name, fp, h, col = clutter[i % len(clutter)]
        b.add(spec.pick_ws, name, "clutter", fp, h, col)
    return _pack_into(b, targets, bin_)


def _build_cups(b: _Builder, spec: TaskSpec, v: dict, n_distract: int):
    color = v["containers"].split()[0]
    n_t = b.n(1, 2)
    others = [c for c in CUP_COLORS if c != color]
    base_colors = [color] * n_t + list(b.rng.choice(others, size=2, replace=False))
    bases = [
        b.container(spec.place_ws, f"{c} cup", "cup", geo.circle(0.041), geo.circle(0.037), 0.07,
                    COLORS[c], accepts=c)
        for c in base_colors
    ]
    targets = [b.add(spec.pick_ws, f"{color} cup", "cup", geo.circle(0.03), 0.07, COLORS[color],
                     symmetry=36, attrs={"color": color}) for _ in range(n_t)]
    for _ in range(n_distract):
        c = others[int(b.rng.integers(len(others)))]
        b.add(spec.pick_ws, f"{c} cup", "cup", geo.circle(0.03), 0.07, COLORS[c], symmetry=36,
              attrs={"color": c})
    match = [c.id for c in bases if c.container.accepts == color]
    return [t.id for t in targets], {t.id: match for t in targets}


def _build_toys(b: _Builder, spec: TaskSpec, v: dict, n_distract: int):
    kind, dest = v["toys"], v["containers"]
    conts = {}
    slots = [0.14, 0.40, 0.66]
    b.rng.shuffle(slots)
    for x, (name, (outer, inner, rim, col)) in zip(slots, TOY_CONTAINERS.items()):
        at = (x + float(b.rng.uniform(-0.01, 0.01)), 0.2 + float(b.rng.uniform(-0.02, 0.02)))
        conts[name] = b.container(spec.place_ws, name, "box", outer, inner, rim, col,
                                  tilt=spec.tilt_range, lift_max=spec.lift_max, at=at)
    fp, h, col = TOYS[kind]
    targets = [b.add(spec.pick_ws, kind[:-1], kind, fp, h, col) for _ in range(2)]
    others = [k for k in TOYS if k != kind]
    for _ in range(n_distract):
        k = others[int(b.rng.integers(len(others)))]
        fp, h, col = TOYS[k]
        b.add(spec.pick_ws, k[:-1], k, fp, h, col)
    return _pack_into(b, targets, conts[dest])


def _build_towels(b: _Builder, spec: TaskSpec, v: dict, n_distract: int):
    tcolor = v["towels"].split()[0]
    pcolor = v["containers"].split()[0]
    others = [c for c in PLATE_COLORS if c != pcolor]
    plate_colors = [pcolor] + list(b.rng.choice(others, size=2, replace=False))
    plates = {}
    for c in plate_colors:
        r = float(b.rng.uniform(0.075, 0.085))
        plates[c] = b.container(spec.place_ws, f"{c} plate", "plate", geo.circle(r),
                                geo.circle(r - 0.01), 0.015, COLORS[c], accepts=c,
                                tilt=spec.tilt_range, lift_max=spec.lift_max)
    size = (float(b.rng.uniform(0.07, 0.09)), float(b.rng.uniform(0.05, 0.06)))
    target = b.add(spec.pick_ws, f"{tcolor} towel", "towel", geo.rect(*size), 0.012,
                   COLORS[tcolor], attrs={"color": tcolor})
    towel_others = [c for c in TOWEL_COLORS if c != tcolor]
    for _ in range(n_distract):
        c = towel_others[int(b.rng.integers(len(towel_others)))]
        b.add(spec.pick_ws, f"{c} towel", "towel", geo.rect(0.08, 0.055), 0.012, COLORS[c],
              attrs={"color": c})
    return [target.id], {target.id: [plates[pcolor].id]}


# ---------------------------------------------------------------------------
# task registry

_COLOR_VOCAB = BLOCK_COLORS[:4]
_SHAPE_VOCAB = tuple(SHAPE_PLURALS)

TASKS: dict[str, TaskSpec] = {}


def _register(**kw) -> None:
    spec = TaskSpec(**kw)
    TASKS[spec.task_id] = spec


_register(task_id="packA", letter="A", title="bedroom-sofa-pack-blocks",
          template="{verb} all the {color} blocks on the bedroom sofa to the brown box",
          verbs=("pack",), vocab={"color": _COLOR_VOCAB}, pick_ws="bedroom sofa",
          place_ws="bedroom sofa", seen=True, goal_kind="volume_in_container",
          builder=_build_pack_blocks)
_register(task_id="packB", letter="B", title="bedroom-sofa-pack-objects-group",
          template="{verb} all the {objects} on the bedroom sofa to the brown box",
          verbs=("pack",), vocab={"objects": tuple(SCAN_OBJECTS)}, pick_ws="bedroom sofa",
          place_ws="bedroom sofa", seen=True, goal_kind="volume_in_container",
          builder=_build_pack_objects)
_register(task_id="packC", letter="C", title="bedroom-sofa-chair-pack-objects-seq",
          template="{verb} the {objects} on the bedroom sofa to the brown box on the bedroom chair",
          verbs=("pack",), vocab={"objects": tuple(SCAN_OBJECTS)}, pick_ws="bedroom sofa",
          place_ws="bedroom chair", seen=True, goal_kind="volume_in_container",
          builder=_build_pack_objects)
_register(task_id="kitD", letter="D", title="bedroom-sofa-chair-assemble-kits",
          template="{verb} the {shapes} on the bedroom sofa to the {shapes} hole on the bedroom chair",
          verbs=("put",), vocab={"shapes": KIT_SHAPES}, pick_ws="bedroom sofa",
          place_ws="bedroom chair", seen=True, goal_kind="count_in_slots", builder=_build_kit)
_register(task_id="shapesE", letter="E", title="livingroom-carpet-bed-pack-shapes",
          template="{verb} the {shapes} on the living room carpet to the brown box on the balcony bed",
          verbs=("put",), vocab={"shapes": _SHAPE_VOCAB}, pick_ws="living room carpet",
          place_ws="balcony bed", seen=True, goal_kind="count_matched", builder=_build_pack_shapes)
_register(task_id="bowlF", letter="F", title="livingroom-carpet-bed-put-block-in-bowl",
          template=("{verb} the {color} blocks on the living room carpet to the {color} bowl "
                    "on the balcony bed"),
          verbs=("put",), vocab={"color": _COLOR_VOCAB}, pick_ws="living room carpet",
          place_ws="balcony bed", seen=True, goal_kind="count_matched", builder=_build_bowls)
_register(task_id="shapes6dofG", letter="G", title="livingroom-carpet-bed-pack-shapes-6dof",
          template="{verb} the {shapes} on the living room carpet to the brown box on the balcony bed",
          verbs=("put",), vocab={"shapes": _SHAPE_VOCAB}, pick_ws="living room carpet",
          place_ws="balcony bed", seen=True, goal_kind="count_matched", builder=_build_pack_shapes,
          six_dof=True, tilt_range=math.pi / 6, lift_max=0.10)
_register(task_id="bowl6dofH", letter="H", title="livingroom-carpet-bed-put-block-in-bowl-6dof",
          template=("{verb} the {color} blocks on the living room carpet to the {color} bowl "
                    "on the balcony bed"),
          verbs=("put",), vocab={"color": _COLOR_VOCAB}, pick_ws="living room carpet",
          place_ws="balcony bed", seen=True, goal_kind="count_matched", builder=_build_bowls,
          six_dof=True, tilt_range=math.pi / 6, lift_max=0.10)
_register(task_id="bottlesI", letter="I", title="guestroom-bed-table-organize-bottles",
          template=("{verb} all the supplement bottles from the bed to the brown wood box "
                    "on the table in the guest room"),
          verbs=("pack", "put", "pick"), vocab={}, pick_ws="bed",
          place_ws="table in the guest room", seen=False, goal_kind="volume_in_container",
          builder=_build_bottles)
_register(task_id="shoesJ", letter="J", title="laundry-bathroom-basket-pack-shoes",
          template=("{verb} the {shoes} in the laundry room to the black basket "
                    "in front of the bathroom sink"),
          verbs=("pack", "put", "pick"), vocab={"shoes": tuple(SHOES)}, pick_ws="laundry room",
          place_ws="bathroom sink", seen=False, goal_kind="volume_in_container",
          builder=_build_shoes)
_register(task_id="foodK", letter="K", title="officeroom-table-corner-tidy-food",
          template="{verb} the food boxes on the office room desk to the grey trash bin in the corner",
          verbs=("toss", "put", "pick"), vocab={}, pick_ws="office room desk", place_ws="corner",
          seen=False, goal_kind="volume_in_container", builder=_build_food)
_register(task_id="stackL", letter="L", title="livingroom-carpet-corner-stack-cups",
          template="{verb} the {containers} from the living room carpet to the living room corner",
          verbs=("stack",), vocab={"containers": tuple(f"{c} cups" for c in CUP_COLORS)},
          pick_ws="living room carpet", place_ws="living room corner", seen=False,
          goal_kind="count_matched", builder=_build_cups)
_register(task_id="toysM", letter="M", title="bedroom-ground-drawer-sort-toys",
          template="{verb} the {toys} on the bedroom ground to the {containers} beside the drawer dresser",
          verbs=("pick", "pack", "take"), vocab={"toys": tuple(TOYS), "containers": tuple(TOY_CONTAINERS)},
          pick_ws="bedroom ground", place_ws="drawer dresser", seen=False,
          goal_kind="volume_in_container", builder=_build_toys)
_register(task_id="towelsN", letter="N", title="kitchen-livingroom-basket-table-put-towels",
          template=("{verb} the {towels} from the kitchen pantry basket and put it on the {containers} "
                    "on the living room table"),
          verbs=("take", "put", "pick"),
          vocab={"towels": tuple(f"{c} towel" for c in TOWEL_COLORS),
                 "containers": tuple(f"{c} plate" for c in PLATE_COLORS)},
          pick_ws="kitchen pantry basket", place_ws="living room table", seen=False,
          goal_kind="volume_in_container", builder=_build_towels)
_register(task_id="toys6dofO", letter="O", title="bedroom-ground-drawer-sort-toys-6dof",
          template="{verb} the {toys} on the bedroom ground to the {containers} beside the drawer dresser",
          verbs=("pick", "pack", "take"), vocab={"toys": tuple(TOYS), "containers": tuple(TOY_CONTAINERS)},
          pick_ws="bedroom ground", place_ws="drawer dresser", seen=False,
          goal_kind="volume_in_container", builder=_build_toys,
          six_dof=True, tilt_range=math.pi / 4, lift_max=0.10)
_register(task_id="towels6dofP", letter="P", title="kitchen-livingroom-basket-table-put-towels-6dof",
          template=("{verb} the {towels} from the kitchen pantry basket and put it on the {containers} "
                    "on the living room table"),
          verbs=("take", "put", "pick"),
          vocab={"towels": tuple(f"{c} towel" for c in TOWEL_COLORS),
                 "containers": tuple(f"{c} plate" for c in PLATE_COLORS)},
          pick_ws="kitchen pantry basket", place_ws="living room table", seen=False,
          goal_kind="volume_in_container", builder=_build_towels,
          six_dof=True, tilt_range=math.pi / 4, lift_max=0.10)

SEEN_TASKS = tuple(t for t, s in TASKS.items() if s.seen)
UNSEEN_TASKS = tuple(t for t, s in TASKS.items() if not s.seen)


def get_task(name: str) -> TaskSpec:
    """Look up a task by id (``packA``), letter (``A``) or title."""
    if isinstance(name, TaskSpec):
        return name
    for spec in TASKS.values():
        if name in (spec.task_id, spec.letter, spec.title) or name.lower() == spec.task_id.lower():
            return spec
    raise ConfigError(f"unknown task {name!r}; valid task ids: {', '.join(TASKS)}")


# ---------------------------------------------------------------------------
# layout

_APPROACH_GAP = 0.35


def _layout(rng: np.random.Generator, names: list[str], textured: bool) -> list[Workspace]:
    sx, sy = SCENE_SIZE
    placed: list[Workspace] = []
    for i, name in enumerate(names):
        for _ in range(500):
            yaw = float(rng.integers(0, 2)) * np.pi / 2
            cx = round(float(rng.uniform(0.7, sx - 0.7)) / 0.05) * 0.05
            cy = round(float(rng.uniform(0.7, sy - 0.7)) / 0.05) * 0.05
            if all(math.hypot(cx - w.center[0], cy - w.center[1]) >= 1.3 for w in placed):
                break
        else:
            raise _Retry("workspace layout failed")
        offset = geo.rot2(yaw) @ np.array([0.0, -(0.2 + _APPROACH_GAP)])
        approach = (cx + float(offset[0]), cy + float(offset[1]))
        ground = name in GROUND_WORKSPACES
        tex = None
        if name in TEXTURED_WORKSPACES or (textured and i < 2):
            tex = int(rng.integers(0, 2**31))
        placed.append(Workspace(
            id=f"ws{i}", name=name, room=_room_of(name), center=(cx, cy), yaw=yaw,
            approach=approach, approach_yaw=yaw + np.pi / 2,
            surface_height=0.0 if ground else 0.45,
            surface_color=SURFACE_COLORS.get(name, (0.7, 0.7, 0.66)),
            texture_seed=tex,
        ))
    return placed


def _room_of(name: str) -> str:
    for room in ("living room", "guest room", "laundry room", "office room", "bedroom",
                 "bathroom", "kitchen", "balcony"):
        if room in name:
            return room
    return "common area"


DEFAULT_DISTRACTORS = {True: 2, False: 3}


def generate_scene(task, seed: int, *, H: int = 80, W: int = 160, k: int = 36,
                   n_distractors: int | None = None, n_extra_workspaces: int = 1,
                   values: dict | None = None) -> Scene:
    """Build a deterministic scene for ``task`` from ``seed``.

    Raises:
        PlacementFailure: objects could not be packed after bounded retries.
    """
    spec = get_task(task)
    if n_distractors is None:
        n_distractors = DEFAULT_DISTRACTORS[spec.seen]
    rng = np.random.default_rng([int(seed), ord(spec.letter)])
    picked = values or spec.sample_values(rng)
    for attempt in range(20):
        try:
            return _attempt(spec, seed, rng, picked, H, W, k, n_distractors, n_extra_workspaces)
        except _Retry:
            continue
    raise PlacementFailure(f"task {spec.task_id} seed {seed}: could not place objects")


def _attempt(spec, seed, rng, values, H, W, k, n_distractors, n_extra) -> Scene:
    names = [spec.pick_ws] + ([spec.place_ws] if spec.cross_workspace else [])
    pool = [n for n in DISTRACTOR_WORKSPACES if n not in names]
    extra = list(rng.choice(pool, size=min(n_extra, len(pool)), replace=False)) if n_extra else []
    workspaces = _layout(rng, names + [str(n) for n in extra], textured=not spec.seen)
    by_name = {w.name: w for w in workspaces}
    b = _Builder(rng, by_name)
    targets, accept = spec.builder(b, spec, values, n_distractors)
    scene = Scene(
        task_id=spec.task_id, seed=int(seed), instruction=spec.template.format(**values),
        workspaces=workspaces, objects=b.objects,
        goal=Goal(spec.goal_kind, list(targets), accept),
        robot=RobotPose(float(rng.uniform(0.2, SCENE_SIZE[0] - 0.2)),
                        float(rng.uniform(0.2, SCENE_SIZE[1] - 0.2)), 0.0, None),
        gt_steps=_gt_steps(spec, by_name), placeholders=dict(values),
        rooms=_rooms(workspaces), H=H, W=W, k=k,
    )
    if spec.six_dof:
        place = by_name[spec.place_ws]
        tilted = [o for o in scene.objects if o.container is not None and o.workspace_id == place.id]
        if tilted:
            o = tilted[0]
            place.surface_pose = (o.x, o.y, o.z, o.roll, o.pitch, o.yaw)
    from lovmm.sim.oracle import capacity_ok  # local: oracle imports this module's types

    if not capacity_ok(scene):
        raise _Retry("destination cannot hold every target")
    return scene


def _gt_steps(spec: TaskSpec, by_name: dict[str, Workspace]) -> list[GroundTruthStep]:
    if not spec.cross_workspace:
        ws = by_name[spec.pick_ws]
        return [GroundTruthStep("combined", ws.name, ws.id)]
    a, b = by_name[spec.pick_ws], by_name[spec.place_ws]
    return [GroundTruthStep("pick_site", a.name, a.id), GroundTruthStep("place_site", b.name, b.id)]


def _rooms(workspaces: list[Workspace]) -> dict:
    rooms: dict[str, list[str]] = {}
    for w in workspaces:
        rooms.setdefault(w.room, []).append(w.id)
    return rooms
