"""Procedural household simulator, task cards and scripted expert."""
from lovmm.sim.oracle import oracle, run_oracle
from lovmm.sim.scene import Scene, render, scene_frames, score, step
from lovmm.sim.tasks import SEEN_TASKS, TASKS, UNSEEN_TASKS, generate_scene, get_task

__all__ = [
    "Scene", "render", "scene_frames", "score", "step", "oracle", "run_oracle",
    "TASKS", "SEEN_TASKS", "UNSEEN_TASKS", "generate_scene", "get_task",
]
