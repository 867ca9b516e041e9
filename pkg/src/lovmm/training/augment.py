"""SE(2) and photometric augmentation of training samples.

Poses and images share one pixel map: rotate by ``theta`` in the
``(x = col, y = row)`` frame about the image center ``((H-1)/2, (W-1)/2)``,
then translate by ``(tu, tv)`` pixels. When pick and place come from one
observation they get one transform and the relative yaw label is unchanged.
Two observations get independent transforms, so the yaw label shifts by the
nearest bin of ``theta_place - theta_pick``. Surface tilt labels (roll,
pitch) are turned with the place view.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from lovmm.actions import Action, Observation, PickPose, PlacePose
from lovmm.config import TrainConfig
from lovmm.errors import OutOfBoundsAction
from lovmm.training.targets import TrainingSample

MAX_RETRIES = 20


@dataclass(frozen=True)
class SE2:
    theta: float = 0.0      # radians
    tu: float = 0.0         # rows
    tv: float = 0.0         # cols

    @property
    def is_identity(self) -> bool:
        return self.theta == 0.0 and self.tu == 0.0 and self.tv == 0.0

    def matrix(self) -> np.ndarray:
        """2x2 map of centered ``(u, v)`` offsets."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, s], [-s, c]])

    def apply(self, u: float, v: float, H: int, W: int) -> tuple[float, float]:
        cu, cv = (H - 1) / 2.0, (W - 1) / 2.0
        du, dv = self.matrix() @ np.array([u - cu, v - cv])
        return du + cu + self.tu, dv + cv + self.tv

    def apply_pixel(self, u: int, v: int, H: int, W: int) -> tuple[int, int]:
        fu, fv = self.apply(u, v, H, W)
        return int(round(fu)), int(round(fv))


def yaw_shift(theta: float, k: int) -> int:
    step = 2 * math.pi / k
    return int(round(theta / step)) % k


def rotate_tilt(roll: float, pitch: float, theta: float) -> tuple[float, float]:
    """Roll/pitch whose surface normal is the given one turned by ``theta`` about z."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    n = np.array([sp, -sr * cp, cr * cp])
    c, s = math.cos(theta), math.sin(theta)
    n = np.array([c * n[0] - s * n[1], s * n[0] + c * n[1], n[2]])
    return math.atan2(-n[1], n[2]), math.asin(float(np.clip(n[0], -1, 1)))


def decompose_rotation(R: np.ndarray) -> tuple[float, float, float]:
    """Inverse of ``rot3``: ``R = Rx(roll) @ Ry(pitch) @ Rz(yaw)``."""
    pitch = math.asin(float(np.clip(R[0, 2], -1, 1)))
    roll = math.atan2(-R[1, 2], R[2, 2])
    yaw = math.atan2(-R[0, 1], R[0, 0])
    return roll, pitch, yaw


# -- images --------------------------------------------------------------------------


def _warp(img: np.ndarray, tf: SE2, order: int) -> np.ndarray:
    H, W = img.shape[:2]
    center = np.array([(H - 1) / 2.0, (W - 1) / 2.0])
    inv = tf.matrix().T
    offset = center - inv @ (center + np.array([tf.tu, tf.tv]))
    if img.ndim == 2:
        return ndimage.affine_transform(img, inv, offset=offset, order=order, mode="constant", cval=0.0)
    return np.stack([ndimage.affine_transform(img[..., ch], inv, offset=offset, order=order,
                                              mode="constant", cval=0.0)
                     for ch in range(img.shape[2])], axis=-1)


def warp_observation(obs: Observation, tf: SE2) -> Observation:
    if tf.is_identity:
        return obs
    labels = None if obs.labels is None else _warp(obs.labels, tf, 0).astype(obs.labels.dtype)
    return replace(obs, color=np.clip(_warp(obs.color, tf, 1), 0.0, 1.0),
                   depth=_warp(obs.depth, tf, 1), labels=labels)


def photometric(obs: Observation, rng: np.random.Generator, config: TrainConfig) -> Observation:
    color = obs.color
    changed = False
    if rng.random() < config.brightness_prob:
        color = color * rng.uniform(*config.brightness)
        changed = True
    if rng.random() < config.noise_prob:
        color = color + rng.normal(0.0, config.noise_sigma, color.shape)
        changed = True
    if rng.random() < config.blur_prob:
        # kernel size 2r+1 with r = truncate * sigma
        radius = config.blur_kernel // 2
        color = ndimage.gaussian_filter(color, sigma=(1.0, 1.0, 0.0), truncate=float(radius), mode="nearest")
        changed = True
    if not changed:
        return obs
    return replace(obs, color=np.clip(color, 0.0, 1.0))


# -- samples -------------------------------------------------------------------------


def transform_action(action: Action, pick_tf: SE2, place_tf: SE2, H: int, W: int, k: int) -> Action:
    """Map expert poses through the view transforms; raises if either leaves the image."""
    pu, pv = pick_tf.apply_pixel(action.pick.u, action.pick.v, H, W)
    q = action.place
    qu, qv = place_tf.apply_pixel(q.u, q.v, H, W)
    if not (0 <= pu < H and 0 <= pv < W and 0 <= qu < H and 0 <= qv < W):
        raise OutOfBoundsAction("transformed pose outside the image")
    yaw = (q.yaw_index + yaw_shift(place_tf.theta - pick_tf.theta, k)) % k
    roll, pitch = q.roll, q.pitch
    if place_tf.theta != 0.0 and (roll != 0.0 or pitch != 0.0):
        roll, pitch = rotate_tilt(roll, pitch, place_tf.theta)
    return replace(action, pick=PickPose(pu, pv), place=PlacePose(qu, qv, yaw, roll, pitch, q.z))


def apply_transforms(sample: TrainingSample, pick_tf: SE2, place_tf: SE2 | None, k: int) -> TrainingSample:
    """Apply explicit view transforms (``place_tf`` is ignored for a shared observation)."""
    H, W = sample.obs_pick.shape
    if sample.same_observation or place_tf is None:
        place_tf = pick_tf
    expert = transform_action(sample.expert, pick_tf, place_tf, H, W, k)
    obs_p = warp_observation(sample.obs_pick, pick_tf)
    obs_q = obs_p if sample.same_observation else warp_observation(sample.obs_place, place_tf)
    return replace(sample, obs_pick=obs_p, obs_place=obs_q, expert=expert)


def random_se2(rng: np.random.Generator, max_translation: float) -> SE2:
    theta = float(rng.uniform(-math.pi, math.pi))
    tu, tv = rng.integers(-max_translation, max_translation + 1, size=2)
    return SE2(theta, float(tu), float(tv))


def augment(sample: TrainingSample, seed, config: TrainConfig | None = None, k: int | None = None) -> TrainingSample:
    """Random in-bounds SE(2) transform, then photometric noise.

    ``seed`` may be an int, a seed sequence or a ``Generator``. Transforms are
    resampled up to ``MAX_RETRIES`` times until both poses stay in the image,
    then the identity is used.
    """
    config = config or TrainConfig()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    k = k or 36
    out = sample
    if config.augment:
        for _ in range(MAX_RETRIES):
            tf_p = random_se2(rng, config.max_translation)
            tf_q = tf_p if sample.same_observation else random_se2(rng, config.max_translation)
            try:
                out = apply_transforms(sample, tf_p, tf_q, k)
                break
            except OutOfBoundsAction:
                continue
    if config.photometric:
        obs_p = photometric(out.obs_pick, rng, config)
        obs_q = obs_p if out.same_observation else photometric(out.obs_place, rng, config)
        out = replace(out, obs_pick=obs_p, obs_place=obs_q)
    return out


# -- scenes (label-consistency checks) ---------------------------------------------------


def transform_workspace(scene, ws_id: str, tf: SE2):
    """Copy of ``scene`` with every item on ``ws_id`` moved rigidly by the view transform.

    The world map has the same form as the pixel map: rotation about the
    workspace image center in local ``(x, y)``, translation by ``(tv, tu)``
    pixels. Raises :class:`OutOfBoundsAction` when a footprint leaves the workspace.
    """
    from lovmm.sim import geometry as geo

    new = copy.deepcopy(scene)
    ws = new.workspace(ws_id)
    ey, ex = ws.extent
    ps = new.pixel_size
    cx, cy = ex / 2.0, ey / 2.0
    c, s = math.cos(tf.theta), math.sin(tf.theta)
    Rz = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    for o in new.items_on(ws_id):
        dx, dy = o.x - cx, o.y - cy
        o.x = cx + c * dx - s * dy + tf.tv * ps
        o.y = cy + s * dx + c * dy + tf.tu * ps
        if o.tilted:
            o.roll, o.pitch, o.yaw = decompose_rotation(Rz @ o.rotation())
        else:
            o.yaw = float(geo.wrap_angle(o.yaw + tf.theta))
        fp = o.world_footprint()
        if fp.min() < 0 or fp[:, 0].max() > ex or fp[:, 1].max() > ey:
            raise OutOfBoundsAction(f"object {o.id} leaves workspace {ws_id}")
    return new
