"""Affordance heatmap dumps at observation resolution."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from lovmm import io


def normalize(Q: np.ndarray) -> np.ndarray:
    lo, hi = float(Q.min()), float(Q.max())
    if hi <= lo:
        return np.zeros_like(Q, dtype=np.float64)
    return (Q - lo) / (hi - lo)


def overlay(color: np.ndarray, heat: np.ndarray, alpha: float = 0.6, cmap: str = "jet") -> np.ndarray:
    from matplotlib import colormaps

    rgb = colormaps[cmap](heat)[..., :3]
    return np.clip((1 - alpha) * color + alpha * rgb, 0.0, 1.0)


def _save_png(path: Path, img: np.ndarray) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # no metadata, so reruns are byte-identical
    if img.ndim == 2:
        plt.imsave(path, img, cmap="gray", vmin=0.0, vmax=1.0, metadata={"Software": None})
    else:
        plt.imsave(path, img, metadata={"Software": None})


def dump_affordances(policy, obs_pick, obs_place, lm: str, out_dir) -> dict:
    """Write pick and place heatmaps (grayscale and overlaid) plus raw maps.

    The place image is the ``Q_place`` slice at the argmax yaw bin. Returns
    the written paths and the selected poses.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    maps = policy.affordances(obs_pick, obs_place, lm)
    q_slice = maps.Q_place[..., maps.place.yaw_index]
    pick_heat = normalize(maps.Q_pick)
    place_heat = normalize(q_slice)
    paths = {
        "q_pick": out / "q_pick.png",
        "q_pick_overlay": out / "q_pick_overlay.png",
        "q_place": out / "q_place.png",
        "q_place_overlay": out / "q_place_overlay.png",
        "q_pick_raw": out / "q_pick.arr",
        "q_place_raw": out / "q_place.arr",
    }
    _save_png(paths["q_pick"], pick_heat)
    _save_png(paths["q_pick_overlay"], overlay(obs_pick.color, pick_heat))
    _save_png(paths["q_place"], place_heat)
    _save_png(paths["q_place_overlay"], overlay(obs_place.color, place_heat))
    io.save_array(paths["q_pick_raw"], maps.Q_pick)
    io.save_array(paths["q_place_raw"], maps.Q_place)
    return {"paths": {k: str(v) for k, v in paths.items()},
            "pick": [maps.pick.u, maps.pick.v],
            "place": [maps.place.u, maps.place.v, maps.place.yaw_index]}
