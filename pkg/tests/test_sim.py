from __future__ import annotations

import math

import numpy as np
import pytest

from lovmm.actions import Action, PickPose, PlacePose
from lovmm.errors import ConfigError, InvalidSequence, UnknownWorkspace
from lovmm.sim import geometry as geo
from lovmm.sim.oracle import oracle, pixel_of, run_oracle
from lovmm.sim.scene import (
    ContainerSpec,
    Goal,
    GroundTruthStep,
    Scene,
    SimObject,
    Workspace,
    pick,
    place,
    render,
    satisfied,
    score,
    step,
)
from lovmm.sim.tasks import TASKS, generate_scene, get_task
from lovmm.vlmap import RobotPose


def _scene(objects, goal=None, H=80, W=160):
    ws = Workspace("ws0", "desk", "office", (2.0, 2.0), 0.0, (2.0, 1.45), math.pi / 2)
    for i, o in enumerate(objects):
        o.id = i
    return Scene("test", 0, "", [ws], objects, goal or Goal("count_matched", [], {}),
                 RobotPose(2.0, 1.45, 0.0, "ws0"), [GroundTruthStep("combined", "desk", "ws0")], {},
                 H=H, W=W, k=36)


def _block(x, y, size=0.04, h=0.04, z=0.0, color=(1, 0, 0), yaw=0.0):
    return SimObject(0, "block", "block", geo.square(size), h, color, "ws0", x=x, y=y, z=z, yaw=yaw,
                     symmetry=4)


def _bowl(x, y, color=(0, 0, 1), accepts=None):
    return SimObject(0, "bowl", "bowl", geo.circle(0.055), 0.0, color, "ws0", x=x, y=y, movable=False,
                     container=ContainerSpec("bowl", geo.circle(0.046), 0.03, 0.004, accepts))


# -- generation ----------------------------------------------------------------------


def test_generate_deterministic():
    a, b = generate_scene("packA", 0), generate_scene("packA", 0)
    assert a.state_digest() == b.state_digest()
    assert a.instruction == b.instruction
    assert generate_scene("packA", 1).state_digest() != a.state_digest()


@pytest.mark.parametrize("task", ["shapes6dofG", "bowl6dofH", "toys6dofO", "towels6dofP"])
def test_six_dof_ranges(task):
    spec = get_task(task)
    for seed in range(25):
        scene = generate_scene(spec, seed)
        place_ws = scene.workspace_by_name(spec.place_ws).id
        tilted = [o for o in scene.items_on(place_ws) if o.container is not None]
        assert tilted
        for o in tilted:
            assert abs(o.roll) <= spec.tilt_range and abs(o.pitch) <= spec.tilt_range
            assert 0.0 <= o.z <= 0.10


@pytest.mark.parametrize("task", list(TASKS))
def test_zero_distractors(task):
    scene = generate_scene(task, 3, n_distractors=0)
    assert sum(o.movable for o in scene.objects) == len(scene.goal.targets)


def test_invariants_on_generated_scenes():
    for task in TASKS:
        scene = generate_scene(task, 0)
        names = [w.name for w in scene.workspaces]
        assert len(names) == len(set(names))
        for w in scene.workspaces:
            assert 0 <= w.approach[0] <= 5 and 0 <= w.approach[1] <= 5
        assert all(o.volume > 0 for o in scene.objects if o.movable)


def test_unknown_task_lists_ids():
    with pytest.raises(ConfigError, match="packA"):
        get_task("nope")


# -- rendering -----------------------------------------------------------------------


def test_render_empty_workspace():
    obs = render(_scene([]), "ws0")
    assert obs.color.shape == (80, 160, 3) and obs.depth.shape == (80, 160)
    assert not obs.depth.any()
    assert obs.pixel_size == pytest.approx(0.005)


def test_render_cube_blob():
    obs = render(_scene([_block(0.4, 0.2)]), "ws0")
    rows, cols = np.nonzero(obs.depth)
    assert (rows.max() - rows.min() + 1, cols.max() - cols.min() + 1) == (8, 8)
    assert len(rows) == 64
    np.testing.assert_allclose(obs.depth[rows, cols], 0.04)
    assert set(np.unique(obs.labels[rows, cols])) == {1}
    assert obs.label_names[1] == "block"


def test_render_stacked_sums_heights():
    scene = _scene([_block(0.4, 0.2), _block(0.2, 0.2, size=0.02, h=0.02)])
    u, v = pixel_of(scene, 0.2, 0.2)
    step(scene, Action(PickPose(u, v), PlacePose(*pixel_of(scene, 0.4, 0.2), 0), "ws0", "ws0"))
    small = scene.obj(1)
    assert small.z == pytest.approx(0.04)
    obs = render(scene, "ws0")
    uu, vv = pixel_of(scene, small.x, small.y)
    assert obs.depth[uu, vv] == pytest.approx(0.06)
    assert obs.depth.max() == pytest.approx(0.06)


def test_render_unknown_workspace():
    with pytest.raises(UnknownWorkspace):
        render(_scene([]), "ws9")


# -- dynamics ------------------------------------------------------------------------


def test_pick_lone_block():
    scene = _scene([_block(0.4, 0.2)])
    assert pick(scene, "ws0", 40, 80) == {"picked": 0}
    assert scene.carried == 0 and scene.obj(0).workspace_id is None


def test_pick_miss_is_noop():
    scene = _scene([_block(0.4, 0.2)])
    before = scene.state_digest()
    _, ev = step(scene, Action(PickPose(5, 5), PlacePose(40, 80, 0), "ws0", "ws0"))
    assert ev == {"picked": None, "placed_in": None}
    assert scene.state_digest() == before and scene.carried is None


def test_place_requires_carried_object():
    with pytest.raises(InvalidSequence):
        place(_scene([_block(0.4, 0.2)]), "ws0", PlacePose(10, 10, 0))


def test_pick_requires_robot_at_workspace():
    scene = _scene([_block(0.4, 0.2)])
    scene.robot = RobotPose(0.0, 0.0, 0.0, None)
    with pytest.raises(InvalidSequence):
        pick(scene, "ws0", 40, 80)


def test_place_into_container():
    scene = _scene([_bowl(0.6, 0.2), _block(0.2, 0.2, size=0.03, h=0.03)],
                   Goal("count_matched", [1], {1: [0]}))
    pu, pv = pixel_of(scene, 0.2, 0.2)
    u, v = pixel_of(scene, 0.6, 0.2)
    _, ev = step(scene, Action(PickPose(pu, pv), PlacePose(u, v, 0, z=0.004), "ws0", "ws0"))
    assert ev["placed_in"] == "container:0"
    assert scene.obj(1).z == pytest.approx(0.004)
    assert satisfied(scene, 1) and score(scene) == 1.0


def test_place_beside_container_is_surface():
    scene = _scene([_bowl(0.6, 0.2), _block(0.2, 0.2, size=0.03, h=0.03)],
                   Goal("count_matched", [1], {1: [0]}))
    _, ev = step(scene, Action(PickPose(*pixel_of(scene, 0.2, 0.2)), PlacePose(*pixel_of(scene, 0.4, 0.3), 0),
                               "ws0", "ws0"))
    assert ev["placed_in"] == "surface" and score(scene) == 0.0


def test_yaw_is_relative_to_current_heading():
    scene = _scene([_block(0.2, 0.2, yaw=0.3)])
    step(scene, Action(PickPose(*pixel_of(scene, 0.2, 0.2)), PlacePose(40, 80, 9), "ws0", "ws0"))
    assert scene.obj(0).yaw == pytest.approx(0.3 + math.pi / 2)


def test_conservation_over_oracle_episode():
    for task in ("packA", "kitD", "toysM"):
        scene = generate_scene(task, 2)
        n = len(scene.objects)
        ws_ids = {w.id for w in scene.workspaces}
        for st in run_oracle(scene, record=False):
            assert len(scene.objects) == n and scene.carried is None
            assert all(o.workspace_id in ws_ids for o in scene.objects)


def test_replay_determinism():
    a, b = generate_scene("bowlF", 4), generate_scene("bowlF", 4)
    for st in run_oracle(a, record=False):
        step(b, st.action, navigate=True)
    assert a.state_digest() == b.state_digest()


# -- scoring -------------------------------------------------------------------------


def _slot_scene(n_in: int):
    objs = [_block(0.1 + 0.1 * i, 0.1, size=0.02) for i in range(4)]
    slots = [SimObject(0, "slot", "slot", geo.square(0.03), 0.0, (0, 0, 0), "ws0", x=0.1 + 0.1 * i, y=0.3,
                       movable=False, container=ContainerSpec("slot", geo.square(0.03), 0.01))
             for i in range(4)]
    scene = _scene(objs + slots, Goal("count_in_slots", [0, 1, 2, 3], {i: [4 + i] for i in range(4)}))
    for i in range(n_in):
        scene.obj(i).contained_in = 4 + i
    return scene


def test_score_count_rule():
    assert score(_slot_scene(2)) == 0.5
    assert score(_slot_scene(0)) == 0.0
    assert score(_slot_scene(4)) == 1.0


def test_score_volume_rule():
    objs = [_block(0.1, 0.1, size=0.02, h=0.01), _block(0.2, 0.1, size=0.02, h=0.02),
            _block(0.3, 0.1, size=0.02, h=0.01)]
    box = SimObject(0, "box", "box", geo.square(0.19), 0.0, (0.5, 0.3, 0.1), "ws0", x=0.6, y=0.2, movable=False,
                    container=ContainerSpec("box", geo.square(0.17), 0.08))
    scene = _scene(objs + [box], Goal("volume_in_container", [0, 1, 2], {i: [3] for i in range(3)}))
    scene.obj(0).contained_in = 3
    scene.obj(1).contained_in = 3
    assert score(scene) == pytest.approx(0.75)


def test_wrong_color_contributes_zero():
    scene = _scene([_block(0.2, 0.2), _bowl(0.4, 0.2, accepts="red"), _bowl(0.6, 0.2, accepts="blue")],
                   Goal("count_matched", [0], {0: [1]}))
    scene.obj(0).contained_in = 2
    assert score(scene) == 0.0


def test_score_monotone_over_oracle_rollout():
    for task in ("packA", "kitD", "bowlF", "towelsN"):
        scene = generate_scene(task, 5)
        last = score(scene)
        while (nxt := oracle(scene)) is not None:
            step(scene, nxt.action, navigate=True)
            s = score(scene)
            assert last <= s <= 1.0
            last = s
        assert last == 1.0


# -- oracle --------------------------------------------------------------------------


def test_oracle_done_on_solved_scene():
    scene = _scene([_block(0.2, 0.2), _bowl(0.6, 0.2)], Goal("count_matched", [0], {0: [1]}))
    scene.obj(0).contained_in = 1
    assert oracle(scene) is None


def test_oracle_unique_goal():
    scene = _scene([_block(0.2, 0.2), _bowl(0.6, 0.3)], Goal("count_matched", [0], {0: [1]}))
    nxt = oracle(scene)
    assert (nxt.action.pick.u, nxt.action.pick.v) == pixel_of(scene, 0.2, 0.2)
    assert (nxt.action.place.u, nxt.action.place.v) == pixel_of(scene, 0.6, 0.3)
    assert nxt.target == 0 and nxt.container == 1
    step(scene, nxt.action, navigate=True)
    assert score(scene) == 1.0


@pytest.mark.parametrize("obj_yaw,cont_yaw", [(0.3, 1.2), (0.0, 0.0), (-2.0, 0.4), (1.0, -3.0)])
def test_oracle_aligns_object_with_container(obj_yaw, cont_yaw):
    bowl = _bowl(0.6, 0.3)
    bowl.yaw = cont_yaw
    scene = _scene([_block(0.2, 0.2, yaw=obj_yaw), bowl], Goal("count_matched", [0], {0: [1]}))
    step(scene, oracle(scene).action, navigate=True)
    # a 4-fold symmetric block only needs alignment modulo a quarter turn
    quarter = math.pi / 2
    off = (scene.obj(0).yaw - cont_yaw) % quarter
    assert min(off, quarter - off) <= math.pi / 36 + 1e-9


@pytest.mark.parametrize("task", list(TASKS))
def test_oracle_solves_tasks(task):
    for seed in range(10):
        scene = generate_scene(task, seed)
        run_oracle(scene, record=False)
        assert scene.is_solved and score(scene) == 1.0
