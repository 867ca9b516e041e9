from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from lovmm.actions import Action, PickPose, PlacePose
from lovmm.config import TrainConfig
from lovmm.errors import OutOfBoundsAction
from lovmm.sim import geometry as geo
from lovmm.sim.oracle import oracle
from lovmm.sim.scene import render
from lovmm.sim.tasks import generate_scene
from lovmm.training import TrainingSample
from lovmm.training.augment import (
    SE2,
    apply_transforms,
    augment,
    decompose_rotation,
    photometric,
    rotate_tilt,
    transform_action,
    transform_workspace,
    yaw_shift,
)

OFF = TrainConfig(augment=False, photometric=False)


def _sample(task="packA", seed=0):
    scene = generate_scene(task, seed)
    nxt = oracle(scene)
    a = nxt.action
    scene.goto(a.pick_workspace)
    op = render(scene, a.pick_workspace)
    oq = op if a.place_workspace == a.pick_workspace else render(scene, a.place_workspace)
    return scene, TrainingSample(op, oq, "x", a)


def test_identity_unchanged():
    _, s = _sample()
    out = augment(s, 0, OFF)
    assert out is s
    out = apply_transforms(s, SE2(), SE2(), 36)
    assert out.expert == s.expert
    assert out.obs_pick is s.obs_pick


def test_quarter_turn_pixel_map():
    tf = SE2(math.pi / 2)
    assert tf.apply_pixel(0, 40, 80, 160) == (0, 119)
    H, W = 80, 160
    for u, v in [(10, 50), (39, 79), (60, 100)]:
        uu, vv = tf.apply_pixel(u, v, H, W)
        assert (uu, vv) == (v - 40, 119 - u)


def test_shared_observation_rotation_keeps_relative_yaw():
    _, s = _sample("packA", 0)
    assert s.same_observation
    s = replace(s, expert=replace(s.expert, pick=PickPose(30, 70), place=PlacePose(45, 90, 5)))
    tf = SE2(math.pi / 2)
    out = apply_transforms(s, tf, None, 36)
    H, W = s.obs_pick.shape
    assert (out.expert.pick.u, out.expert.pick.v) == tf.apply_pixel(s.expert.pick.u, s.expert.pick.v, H, W)
    assert (out.expert.place.u, out.expert.place.v) == tf.apply_pixel(s.expert.place.u, s.expert.place.v, H, W)
    assert out.expert.place.yaw_index == s.expert.place.yaw_index
    assert out.obs_pick is out.obs_place
    # a quarter turn is grid exact here, so moved pixels keep their values
    u, v = s.expert.pick.u, s.expert.pick.v
    uu, vv = tf.apply_pixel(u, v, H, W)
    np.testing.assert_allclose(out.obs_pick.color[uu, vv], s.obs_pick.color[u, v], atol=1e-9)
    assert out.obs_pick.labels[uu, vv] == s.obs_pick.labels[u, v]


def test_place_only_quarter_turn_shifts_nine_bins():
    _, s = _sample("kitD", 0)
    assert not s.same_observation
    out = apply_transforms(s, SE2(), SE2(math.pi / 2), 36)
    assert out.expert.place.yaw_index == (s.expert.place.yaw_index + 9) % 36
    assert out.expert.pick == s.expert.pick
    assert out.obs_pick is s.obs_pick
    assert yaw_shift(math.pi / 2, 36) == 9 and yaw_shift(-math.pi / 2, 36) == 27


@pytest.mark.parametrize("theta", [math.pi / 2, -math.pi / 3, 2.0])
def test_labels_match_oracle_on_transformed_scene(theta):
    scene, s = _sample("kitD", 1)
    a = s.expert
    tf = SE2(theta, 2.0, -3.0)
    moved = transform_workspace(scene, a.place_workspace, tf)
    want = oracle(moved).action
    got = transform_action(a, SE2(), tf, scene.H, scene.W, scene.k)
    assert abs(got.place.u - want.place.u) <= 1 and abs(got.place.v - want.place.v) <= 1
    obj = scene.obj(oracle(scene).target)
    period = scene.k // max(obj.symmetry, 1)
    d = (got.place.yaw_index - want.place.yaw_index) % period
    assert min(d, period - d) <= 1
    assert got.pick == want.pick


def test_translation_pushing_out_is_resampled():
    _, s = _sample("packA", 0)
    corner = replace(s.expert, pick=PickPose(0, 0), place=PlacePose(79, 159, 3))
    s = replace(s, expert=corner)
    cfg = TrainConfig(photometric=False, max_translation=16)
    for seed in range(30):
        out = augment(s, seed, cfg)
        e = out.expert
        assert 0 <= e.pick.u < 80 and 0 <= e.pick.v < 160
        assert 0 <= e.place.u < 80 and 0 <= e.place.v < 160


def test_retries_exhausted_gives_identity():
    _, s = _sample("packA", 0)
    cfg = TrainConfig(photometric=False, max_translation=100_000)
    out = augment(s, 0, cfg)
    assert out.expert == s.expert and out.obs_pick is s.obs_pick


def test_transform_action_out_of_bounds():
    a = Action(PickPose(0, 0), PlacePose(5, 5, 0), "a", "a")
    with pytest.raises(OutOfBoundsAction):
        transform_action(a, SE2(0, -1, 0), SE2(), 10, 10, 4)


def test_photometric_touches_color_only():
    _, s = _sample()
    cfg = TrainConfig(brightness_prob=1.0, noise_prob=1.0, blur_prob=1.0)
    out = photometric(s.obs_pick, np.random.default_rng(0), cfg)
    assert out.depth is s.obs_pick.depth
    assert out.color.min() >= 0 and out.color.max() <= 1
    assert not np.allclose(out.color, s.obs_pick.color)
    again = photometric(s.obs_pick, np.random.default_rng(0), cfg)
    np.testing.assert_array_equal(out.color, again.color)
    none = TrainConfig(brightness_prob=0.0, noise_prob=0.0, blur_prob=0.0)
    assert photometric(s.obs_pick, np.random.default_rng(0), none) is s.obs_pick


def test_augment_deterministic_per_seed():
    _, s = _sample("kitD", 2)
    a, b = augment(s, 11), augment(s, 11)
    assert a.expert == b.expert
    np.testing.assert_array_equal(a.obs_place.color, b.obs_place.color)


def test_rotate_tilt_turns_surface_normal(rng):
    for _ in range(20):
        roll, pitch, theta = rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7), rng.uniform(-np.pi, np.pi)
        n = geo.rot3(roll, pitch, 0.0)[:, 2]
        c, s = math.cos(theta), math.sin(theta)
        want = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]]) @ n
        r2, p2 = rotate_tilt(roll, pitch, theta)
        np.testing.assert_allclose(geo.rot3(r2, p2, 0.0)[:, 2], want, atol=1e-12)


def test_decompose_rotation_inverts_rot3(rng):
    for _ in range(20):
        ang = rng.uniform([-1.2, -1.2, -np.pi], [1.2, 1.2, np.pi])
        np.testing.assert_allclose(decompose_rotation(geo.rot3(*ang)), ang, atol=1e-12)
