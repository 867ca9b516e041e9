"""Observation and action records shared by the simulator, policy and trainer."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass
class Observation:
    """Top-down orthographic RGB-D view of one workspace.

    ``depth`` is height above the workspace surface in meters. ``labels``
    indexes ``label_names`` per pixel (ground truth, for the oracle
    embedder only).
    """

    color: np.ndarray
    depth: np.ndarray
    pixel_size: float
    workspace_id: str
    labels: np.ndarray | None = None
    label_names: list[str] = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


@dataclass(frozen=True)
class PickPose:
    u: int
    v: int


@dataclass(frozen=True)
class PlacePose:
    u: int
    v: int
    yaw_index: int = 0
    roll: float = 0.0
    pitch: float = 0.0
    z: float = 0.0


@dataclass(frozen=True)
class Action:
    pick: PickPose
    place: PlacePose
    pick_workspace: str
    place_workspace: str

    def to_dict(self) -> dict:
        return {
            "pick": asdict(self.pick),
            "place": {k: (float(v) if isinstance(v, float) else v) for k, v in asdict(self.place).items()},
            "pick_workspace": self.pick_workspace,
            "place_workspace": self.place_workspace,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Action":
        return cls(
            PickPose(int(d["pick"]["u"]), int(d["pick"]["v"])),
            PlacePose(**{**d["place"], "u": int(d["place"]["u"]), "v": int(d["place"]["v"]),
                         "yaw_index": int(d["place"]["yaw_index"])}),
            d["pick_workspace"],
            d["place_workspace"],
        )
