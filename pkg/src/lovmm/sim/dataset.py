"""Expert demonstration collection, on-disk layout, loading and replay.

Layout::

    <out>/dataset.json
    <out>/episode_0000/meta.json
    <out>/episode_0000/step_0/{pick,place}_{color,depth,labels}.arr
    <out>/episode_0000/step_0/action.json

``place_*`` arrays are omitted when the step picks and places on the same
workspace; the pick observation is reused.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lovmm import io
from lovmm.actions import Action, Observation
from lovmm.errors import PlacementFailure
from lovmm.parser import parse_grammar, steps_to_json
from lovmm.sim.oracle import run_oracle
from lovmm.sim.scene import score, step
from lovmm.sim.tasks import generate_scene, get_task

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAX_SKIPS = 1000


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _save_obs(d: Path, prefix: str, obs: Observation) -> None:
    io.save_array(d / f"{prefix}_color.arr", obs.color.astype(np.float32))
    io.save_array(d / f"{prefix}_depth.arr", obs.depth.astype(np.float32))
    io.save_array(d / f"{prefix}_labels.arr", obs.labels.astype(np.int16))


def _load_obs(d: Path, prefix: str, pixel_size: float, ws: str, names: list[str]) -> Observation:
    return Observation(
        color=io.load_array(d / f"{prefix}_color.arr").astype(np.float64),
        depth=io.load_array(d / f"{prefix}_depth.arr").astype(np.float64),
        pixel_size=pixel_size,
        workspace_id=ws,
        labels=io.load_array(d / f"{prefix}_labels.arr"),
        label_names=names,
    )


def manipulation_query(instruction: str) -> str:
    return parse_grammar(instruction)[0].manipulation_query


def collect_demos(task, n: int, seed: int, out, *, H: int = 80, W: int = 160, k: int = 36,
                  n_distractors: int | None = None) -> Path:
    """Run ``n`` expert episodes on seeds ``seed, seed+1, ...`` and write them to ``out``.

    Seeds whose scene cannot be generated are skipped and logged.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    spec = get_task(task)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    episodes, skipped = [], []
    s = seed
    while len(episodes) < n:
        if len(skipped) > MAX_SKIPS:
            raise PlacementFailure(f"too many failed seeds for {spec.task_id}")
        try:
            scene = generate_scene(spec, s, H=H, W=W, k=k, n_distractors=n_distractors)
        except PlacementFailure as exc:
            log.warning("skipping seed %d: %s", s, exc)
            skipped.append(s)
            s += 1
            continue
        name = f"episode_{len(episodes):04d}"
        _write_episode(out / name, spec, scene, n_distractors)
        episodes.append({"dir": name, "seed": s})
        s += 1
    _dump(out / "dataset.json", {
        "version": FORMAT_VERSION, "task_id": spec.task_id, "n": n, "seed": seed,
        "H": H, "W": W, "k": k, "episodes": episodes, "skipped_seeds": skipped,
    })
    return out


def _write_episode(d: Path, spec, scene, n_distractors) -> None:
    d.mkdir(parents=True, exist_ok=True)
    instruction = scene.instruction
    lm = manipulation_query(instruction)
    steps = run_oracle(scene)
    for i, st in enumerate(steps):
        sd = d / f"step_{i}"
        sd.mkdir(exist_ok=True)
        same = st.obs_place is st.obs_pick
        _save_obs(sd, "pick", st.obs_pick)
        if not same:
            _save_obs(sd, "place", st.obs_place)
        _dump(sd / "action.json", {
            "action": st.action.to_dict(),
            "lm": lm,
            "same_observation": same,
            "pick_label_names": st.obs_pick.label_names,
            "place_label_names": st.obs_place.label_names,
            "events": st.events,
        })
    _dump(d / "meta.json", {
        "version": FORMAT_VERSION,
        "task_id": spec.task_id,
        "seed": scene.seed,
        "instruction": instruction,
        "parsed": json.loads(steps_to_json(parse_grammar(instruction))),
        "ground_truth": {
            "steps": [{"role": g.role, "workspace": g.workspace, "workspace_id": g.workspace_id}
                      for g in scene.gt_steps],
            "placeholders": scene.placeholders,
        },
        "n_steps": len(steps),
        "score": score(scene),
        "H": scene.H, "W": scene.W, "k": scene.k,
        "n_distractors": n_distractors,
    })


@dataclass
class DemoStep:
    obs_pick: Observation
    obs_place: Observation
    action: Action
    lm: str


@dataclass
class Demo:
    path: Path
    meta: dict
    steps: list[DemoStep] = field(default_factory=list)

    @property
    def task_id(self) -> str:
        return self.meta["task_id"]


def load_episode(d) -> Demo:
    d = Path(d)
    meta = json.loads((d / "meta.json").read_text())
    ps = 0.4 / meta["H"]
    demo = Demo(d, meta)
    for i in range(meta["n_steps"]):
        sd = d / f"step_{i}"
        rec = json.loads((sd / "action.json").read_text())
        act = Action.from_dict(rec["action"])
        pick = _load_obs(sd, "pick", ps, act.pick_workspace, rec["pick_label_names"])
        if rec["same_observation"]:
            place = pick
        else:
            place = _load_obs(sd, "place", ps, act.place_workspace, rec["place_label_names"])
        demo.steps.append(DemoStep(pick, place, act, rec["lm"]))
    return demo


def load_dataset(*dirs) -> list[Demo]:
    """Load every episode of one or more dataset directories."""
    demos = []
    for root in dirs:
        root = Path(root)
        manifest = json.loads((root / "dataset.json").read_text())
        demos.extend(load_episode(root / e["dir"]) for e in manifest["episodes"])
    return demos


def replay_episode(d) -> float:
    """Regenerate the episode's scene from its seed, re-execute the recorded actions, score it."""
    d = Path(d)
    meta = json.loads((d / "meta.json").read_text())
    scene = generate_scene(meta["task_id"], meta["seed"], H=meta["H"], W=meta["W"], k=meta["k"],
                           n_distractors=meta.get("n_distractors"))
    for i in range(meta["n_steps"]):
        rec = json.loads((d / f"step_{i}" / "action.json").read_text())
        step(scene, Action.from_dict(rec["action"]), navigate=True)
    return score(scene)
