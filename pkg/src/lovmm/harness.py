"""Episode runner and evaluation: parse, localize, navigate, act, step.

Every episode builds its own semantic map from the scene's posed frames with
the oracle pixel embedder, resolves the parsed workspace phrases to
workspaces through that map, and then lets a policy act. After each place,
the policy gets one corrective step at the place workspace when the placed
target is not yet satisfied.
"""
from __future__ import annotations

import csv
import json
import logging
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from lovmm.actions import Action, Observation, PickPose, PlacePose
from lovmm.config import MapSettings
from lovmm.encoders import OraclePixelEmbedder
from lovmm.errors import LovmmError, PlacementFailure, SimulationError
from lovmm.parser import ParsedStep, ParserBackend, Role, parse_with_fallback
from lovmm.sim.oracle import max_steps, oracle
from lovmm.sim.scene import Scene, render, satisfied, scene_frames, score, step
from lovmm.sim.tasks import generate_scene, get_task
from lovmm.vlmap import MapConfig, QuerySet, build_map, localize, navigate, target_position

log = logging.getLogger(__name__)


class EpisodePolicy(Protocol):
    def act(self, scene: Scene, obs_pick: Observation, obs_place: Observation, lm: str) -> Action: ...


class LearnedPolicy:
    """Adapter from :class:`lovmm.policy.Policy` (which never sees the scene)."""

    def __init__(self, policy):
        self.policy = policy

    def act(self, scene, obs_pick, obs_place, lm):
        return self.policy.act(obs_pick, obs_place, lm)


class OraclePolicy:
    """Scripted expert as a policy: an upper bound for the harness."""

    def act(self, scene, obs_pick, obs_place, lm):
        nxt = oracle(scene)
        if nxt is None:
            return Action(PickPose(0, 0), PlacePose(0, 0), obs_pick.workspace_id, obs_place.workspace_id)
        return nxt.action


class RandomPolicy:
    """Uniform random pixels and yaw bin; flat placement at zero height."""

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def act(self, scene, obs_pick, obs_place, lm):
        H, W = obs_pick.shape
        r = self.rng
        return Action(PickPose(int(r.integers(H)), int(r.integers(W))),
                      PlacePose(int(r.integers(H)), int(r.integers(W)), int(r.integers(scene.k))),
                      obs_pick.workspace_id, obs_place.workspace_id)


@dataclass
class Localization:
    steps: list[ParsedStep]
    pick_ws: str
    place_ws: str
    lm: str
    targets: dict = field(default_factory=dict)   # workspace phrase -> NavTarget dict


@dataclass
class EpisodeResult:
    task_id: str
    seed: int
    score: float
    n_actions: int = 0
    solved: bool = False
    nav_correct: bool = False
    error: str | None = None
    events: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _map_config(settings: MapSettings | None = None) -> MapConfig:
    s = settings or MapSettings()
    return MapConfig((s.grid_rows, s.grid_cols), s.resolution, (0.0, 0.0), s.embedding_dim)


def localize_steps(scene: Scene, steps: list[ParsedStep], map_settings: MapSettings | None = None,
                   snap_threshold: float = 0.25) -> Localization:
    """Resolve the parsed workspace phrases to workspace ids through a freshly built map."""
    settings = map_settings or MapSettings()
    cfg = _map_config(settings)
    emb = OraclePixelEmbedder(cfg.embedding_dim)
    vlmap = build_map(scene_frames(scene), emb, cfg)
    queries = QuerySet.with_background([s.workspace_query for s in steps], emb.text_encoder,
                                       cfg.embedding_dim)
    lmap = localize(vlmap, queries)
    resolved, targets = {}, {}
    for s in steps:
        tgt = target_position(vlmap, lmap, s.workspace_query, min_cluster_size=1)
        resolved[s.role] = navigate(scene, tgt, snap_threshold).workspace_id
        targets[s.workspace_query] = tgt.to_dict()
    if Role.COMBINED in resolved:
        pick_ws = place_ws = resolved[Role.COMBINED]
    else:
        pick_ws, place_ws = resolved[Role.PICK_SITE], resolved[Role.PLACE_SITE]
    return Localization(steps, pick_ws, place_ws, steps[0].manipulation_query, targets)


def _observe(scene: Scene, pick_ws: str, place_ws: str):
    scene.goto(pick_ws)
    obs_pick = render(scene, pick_ws)
    obs_place = obs_pick if place_ws == pick_ws else render(scene, place_ws)
    return obs_pick, obs_place


def run_episode(scene: Scene, policy: EpisodePolicy, *, backend: ParserBackend | None = None,
                slack: int = 2, snap_threshold: float = 0.25,
                map_settings: MapSettings | None = None, corrective: bool = True) -> EpisodeResult:
    """Run one episode to completion or the step budget and score it."""
    res = EpisodeResult(scene.task_id, scene.seed, 0.0)
    try:
        steps = parse_with_fallback(scene.instruction, backend)
        loc = localize_steps(scene, steps, map_settings, snap_threshold)
    except (LovmmError, ValueError) as exc:
        res.error = f"{type(exc).__name__}: {exc}"
        res.score = score(scene)
        return res
    gt = {g.role: g.workspace_id for g in scene.gt_steps}
    want = (gt.get("combined"), gt.get("combined")) if "combined" in gt else (gt.get("pick_site"), gt.get("place_site"))
    res.nav_correct = (loc.pick_ws, loc.place_ws) == want
    for _ in range(max_steps(scene, slack)):
        if scene.is_solved:
            break
        obs_pick, obs_place = _observe(scene, loc.pick_ws, loc.place_ws)
        action = policy.act(scene, obs_pick, obs_place, loc.lm)
        try:
            _, ev = step(scene, action, navigate=True)
        except SimulationError as exc:
            res.error = f"{type(exc).__name__}: {exc}"
            break
        res.n_actions += 1
        res.events.append(ev)
        placed = ev.get("picked")
        if (corrective and placed is not None and ev.get("placed_in") is not None
                and placed in scene.goal.targets and not satisfied(scene, placed)):
            obs = render(scene, action.place_workspace)
            fix = policy.act(scene, obs, obs, loc.lm)
            try:
                _, ev2 = step(scene, fix, navigate=True)
            except SimulationError as exc:
                res.error = f"{type(exc).__name__}: {exc}"
                break
            ev2["corrective"] = True
            res.n_actions += 1
            res.events.append(ev2)
    res.score = score(scene)
    res.solved = scene.is_solved
    return res


def episode_seeds(base: int, n: int) -> list[int]:
    return [base + i for i in range(n)]


def evaluate(policy_factory: Callable[[], EpisodePolicy], task, episodes: int, seed: int, *,
             H: int = 80, W: int = 160, k: int = 36, n_distractors: int | None = None,
             **episode_kw) -> list[EpisodeResult]:
    """Run ``episodes`` seeded episodes of one task, ordered by episode index.

    Seeds whose scene cannot be generated are skipped and logged, like demo collection.
    """
    spec = get_task(task)
    out = []
    for s in episode_seeds(seed, episodes):
        try:
            scene = generate_scene(spec, s, H=H, W=W, k=k, n_distractors=n_distractors)
        except PlacementFailure as exc:
            log.warning("skipping eval seed %d: %s", s, exc)
            continue
        out.append(run_episode(scene, policy_factory(), **episode_kw))
    return out


def mean_tsr(results: Sequence[EpisodeResult]) -> float:
    return float(np.mean([r.score for r in results])) if results else 0.0


def validation_fn(tasks: Sequence[str], episodes: int, seed: int, **kw) -> Callable:
    """Validation callback for training: mean TSR over fixed seeds per task."""
    def run(policy) -> float:
        cfg = policy.cfg
        return float(np.mean([
            mean_tsr(evaluate(lambda: LearnedPolicy(policy), t, episodes, seed, H=cfg.H, W=cfg.W, k=cfg.k, **kw))
            for t in tasks
        ]))
    return run


# -- reports ---------------------------------------------------------------------------


@dataclass
class EvalMatrix:
    """TSR per (task, demo count) cell with the per-episode scores behind it."""
    cells: dict = field(default_factory=dict)    # (task_id, n_demos) -> list[EpisodeResult]

    def add(self, task_id: str, n_demos, results: list[EpisodeResult]) -> None:
        self.cells[(task_id, str(n_demos))] = results

    def rows(self) -> list[dict]:
        rows = []
        for (task, n), res in sorted(self.cells.items()):
            rows.append({"task_id": task, "n_demos": n, "episodes": len(res), "tsr": mean_tsr(res)})
        return rows

    def write(self, out_dir, plots: bool = True) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = self.rows()
        with (out / "tsr.csv").open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["task_id", "n_demos", "episodes", "tsr"])
            w.writeheader()
            w.writerows(rows)
        report = {
            "summary": rows,
            "episodes": {f"{t}/{n}": [r.to_dict() for r in res] for (t, n), res in sorted(self.cells.items())},
        }
        (out / "tsr.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
        paths = {"csv": out / "tsr.csv", "json": out / "tsr.json", "plots": []}
        if plots:
            paths["plots"] = self._plots(out, rows)
        return paths

    @staticmethod
    def _plots(out: Path, rows: list[dict]) -> list[Path]:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        paths = []
        for n in sorted({r["n_demos"] for r in rows}):
            sub = [r for r in rows if r["n_demos"] == n]
            fig, ax = plt.subplots(figsize=(max(3, 0.6 * len(sub) + 1), 3))
            ax.bar([r["task_id"] for r in sub], [r["tsr"] for r in sub], color="tab:blue")
            ax.set_ylim(0, 1)
            ax.set_ylabel("TSR")
            ax.set_title(f"n_demos = {n}")
            ax.tick_params(axis="x", rotation=60)
            fig.tight_layout()
            p = out / f"tsr_n{n}.png"
            fig.savefig(p, dpi=80)
            plt.close(fig)
            paths.append(p)
        return paths
