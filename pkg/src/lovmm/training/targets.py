"""Training samples and one-hot supervision targets."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from lovmm.actions import Action, Observation
from lovmm.config import ModelConfig
from lovmm.errors import OutOfBoundsAction


@dataclass
class TrainingSample:
    obs_pick: Observation
    obs_place: Observation
    lm: str
    expert: Action
    task_id: str = ""

    @property
    def same_observation(self) -> bool:
        return self.obs_pick is self.obs_place

    @property
    def dof_targets(self) -> np.ndarray:
        p = self.expert.place
        return np.array([p.roll, p.pitch, p.z])

    def with_expert(self, expert: Action, obs_pick=None, obs_place=None) -> "TrainingSample":
        return replace(self, expert=expert, obs_pick=obs_pick or self.obs_pick,
                       obs_place=obs_place or self.obs_place)


def check_action(expert: Action, H: int, W: int, k: int) -> None:
    p, q = expert.pick, expert.place
    if not (0 <= p.u < H and 0 <= p.v < W):
        raise OutOfBoundsAction(f"pick {(p.u, p.v)} outside {H}x{W}")
    if not (0 <= q.u < H and 0 <= q.v < W):
        raise OutOfBoundsAction(f"place {(q.u, q.v)} outside {H}x{W}")
    if not 0 <= q.yaw_index < k:
        raise OutOfBoundsAction(f"yaw bin {q.yaw_index} outside 0..{k - 1}")


def make_targets(expert: Action, config: ModelConfig):
    """Dense one-hot ``Y_pick (H, W)``, ``Y_place (H, W, k)`` and ``(roll, pitch, z)``.

    Raises:
        OutOfBoundsAction: a pose lies outside the observation or yaw range.
    """
    H, W, k = config.H, config.W, config.k
    check_action(expert, H, W, k)
    Y_pick = np.zeros((H, W))
    Y_pick[expert.pick.u, expert.pick.v] = 1.0
    Y_place = np.zeros((H, W, k))
    q = expert.place
    Y_place[q.u, q.v, q.yaw_index] = 1.0
    return Y_pick, Y_place, np.array([q.roll, q.pitch, q.z])
