"""Imitation-learning loop with validation-based checkpoint selection."""
from __future__ import annotations

import json
import logging
import math
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from lovmm.config import ModelConfig, TrainConfig
from lovmm.errors import ConfigError, DivergenceDetected
from lovmm.policy.agent import Policy
from lovmm.training.augment import augment
from lovmm.training.losses import loss_2d_index, loss_3d
from lovmm.training.targets import TrainingSample, check_action

log = logging.getLogger(__name__)

METRICS = "metrics.jsonl"
MANIFEST = "manifest.json"


class DemoSampler:
    """Per-step sampling of ``(demo, step)`` indices, seeded by step index.

    Uniform mode draws a demonstration uniformly. Weighted mode first draws a
    task with probability proportional to its weight (missing tasks weigh 1),
    then a demonstration of that task uniformly.
    """

    def __init__(self, demos: Sequence, seed: int = 0, weighted: bool = False,
                 task_weights: dict | None = None):
        if not demos:
            raise ConfigError("training dataset is empty")
        self.demos = demos
        self.seed = seed
        self.weighted = weighted
        self.tasks = sorted({d.task_id for d in demos})
        self.by_task = {t: [i for i, d in enumerate(demos) if d.task_id == t] for t in self.tasks}
        w = np.array([float((task_weights or {}).get(t, 1.0)) for t in self.tasks])
        if weighted and (np.any(w < 0) or w.sum() <= 0):
            raise ConfigError("task weights must be non-negative with a positive sum")
        self.probs = w / w.sum()

    def rng(self, step: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, step])

    def draw(self, rng: np.random.Generator) -> tuple[int, int]:
        if self.weighted:
            task = self.tasks[int(rng.choice(len(self.tasks), p=self.probs))]
            pool = self.by_task[task]
            di = pool[int(rng.integers(len(pool)))]
        else:
            di = int(rng.integers(len(self.demos)))
        si = int(rng.integers(len(self.demos[di].steps)))
        return di, si


def sample_of(demo, si: int) -> TrainingSample:
    st = demo.steps[si]
    return TrainingSample(st.obs_pick, st.obs_place, st.lm, st.action, demo.task_id)


def sample_loss(policy: Policy, sample: TrainingSample) -> tuple[torch.Tensor, torch.Tensor | None]:
    """``(L_2D, L_3D or None)`` for one sample at the expert poses."""
    cfg = policy.cfg
    check_action(sample.expert, cfg.H, cfg.W, cfg.k)
    x_p = policy.tensor(sample.obs_pick)
    x_q = x_p if sample.same_observation else policy.tensor(sample.obs_place)
    p, q = sample.expert.pick, sample.expert.place
    Qp, Qq, dof = policy.model.forward_sample(x_p, x_q, policy.embed(sample.lm), (p.u, p.v),
                                              (q.u, q.v, q.yaw_index))
    l2 = loss_2d_index(Qp, Qq, (p.u, p.v), (q.u, q.v, q.yaw_index))
    l3 = None
    if dof is not None:
        l3 = loss_3d(dof, torch.tensor([q.roll, q.pitch, q.z], dtype=dof.dtype))
    return l2, l3


@dataclass
class TrainResult:
    run_dir: Path
    checkpoints: list[Path] = field(default_factory=list)
    best: Path | None = None
    best_val_tsr: float | None = None
    metrics: list[dict] = field(default_factory=list)
    policy: Policy | None = None

    @property
    def losses(self) -> list[float]:
        return [m["loss_2d"] + (m["loss_3d"] or 0.0) for m in self.metrics]


def make_optimizer(params, lr: float) -> torch.optim.Optimizer:
    return torch.optim.Adam(params, lr=lr)


def lr_at(step: int, config: TrainConfig) -> float:
    return config.lr * config.lr_decay ** (step // config.lr_decay_every)


def _read_metrics(path: Path, upto: int) -> list[dict]:
    if not path.exists():
        return []
    rows = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    return [r for r in rows if r["step"] <= upto]


def _write_manifest(run_dir: Path, result: TrainResult, val: dict) -> None:
    manifest = {
        "best": result.best.name if result.best else None,
        "best_val_tsr": result.best_val_tsr,
        "checkpoints": [p.name for p in result.checkpoints],
        "val_tsr": {str(k): v for k, v in sorted(val.items())},
    }
    (run_dir / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def train(dataset: Sequence, model_config: ModelConfig | None = None, config: TrainConfig | None = None,
          run_dir=None, *, val_fn: Callable[[Policy], float] | None = None, resume=None,
          policy: Policy | None = None, progress_every: int = 0) -> TrainResult:
    """Train a policy on demonstrations.

    Args:
        dataset: demonstrations (``Demo``-like: ``task_id`` and ``steps``).
        model_config: architecture; ignored when ``policy`` or ``resume`` is given.
        config: optimization settings.
        run_dir: output directory for ``metrics.jsonl``, checkpoints and the manifest.
        val_fn: maps a policy to a validation TSR; without it the last
            checkpoint is reported as best.
        resume: checkpoint path to continue from (parameters, optimizer, step).
        policy: start from this policy instead of a fresh one.
        progress_every: log a progress line every this many steps (0 = never).

    Raises:
        DivergenceDetected: the loss became non-finite. ``exc.last_good`` holds
            the last checkpoint written before that.
    """
    config = config or TrainConfig()
    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(config.seed)
    start = 0
    opt = None
    if resume is not None:
        policy, header, opt = Policy.load(resume, lambda ps: make_optimizer(ps, config.lr))
        start = int(header["step"])
    policy = policy or Policy(model_config or ModelConfig())
    model = policy.model
    if opt is None:
        opt = make_optimizer(model.trainable(), config.lr)
    sampler = DemoSampler(dataset, config.seed, config.weighted_sampling, config.task_weights)

    result = TrainResult(run_dir, policy=policy)
    val: dict[int, float] = {}
    metrics_path = run_dir / METRICS if run_dir else None
    if run_dir is not None:
        (run_dir / "config.json").write_text(json.dumps(
            {"model": policy.cfg.to_dict(), "train": config.to_dict()}, indent=1, sort_keys=True) + "\n")
        result.metrics = _read_metrics(metrics_path, start)
        if resume is not None and (run_dir / MANIFEST).exists():
            man = json.loads((run_dir / MANIFEST).read_text())
            result.checkpoints = [run_dir / n for n in man["checkpoints"]
                                  if int(n.split("_")[1].split(".")[0]) <= start]
            val = {int(k): v for k, v in man.get("val_tsr", {}).items() if int(k) <= start}
        metrics_path.write_text("".join(json.dumps(m) + "\n" for m in result.metrics))
    last_good = result.checkpoints[-1] if result.checkpoints else None

    def checkpoint(step: int) -> Path | None:
        if run_dir is None:
            return None
        path = run_dir / f"ckpt_{step:06d}.lvck"
        policy.save(path, step, opt, meta={"ablation": config.ablation, "n_demos": len(dataset),
                                           "tasks": sampler.tasks})
        if path not in result.checkpoints:
            result.checkpoints.append(path)
        return path

    model.train()
    t0 = time.perf_counter()
    for step in range(start + 1, config.steps + 1):
        lr = lr_at(step - 1, config)
        for g in opt.param_groups:
            g["lr"] = lr
        rng = sampler.rng(step)
        opt.zero_grad()
        tot2 = tot3 = 0.0
        total = None
        for _ in range(config.batch_size):
            di, si = sampler.draw(rng)
            sample = sample_of(dataset[di], si)
            if config.augment or config.photometric:
                sample = augment(sample, rng, config, policy.cfg.k)
            l2, l3 = sample_loss(policy, sample)
            loss = l2 + (l3 if l3 is not None else 0.0)
            total = loss if total is None else total + loss
            tot2 += l2.item()
            tot3 += l3.item() if l3 is not None else 0.0
        total = total / config.batch_size
        if not math.isfinite(total.item()):
            exc = DivergenceDetected(f"non-finite loss at step {step}")
            exc.last_good = last_good
            raise exc
        total.backward()
        opt.step()
        row = {"step": step, "loss_2d": tot2 / config.batch_size,
               "loss_3d": tot3 / config.batch_size if policy.model.dof is not None else None,
               "val_tsr": None}
        at_val = step % config.val_interval == 0 or step == config.steps
        at_ckpt = config.checkpoint_every and step % config.checkpoint_every == 0
        if at_val or at_ckpt:
            last_good = checkpoint(step) or last_good
        if at_val and val_fn is not None:
            model.eval()
            tsr = float(val_fn(policy))
            model.train()
            val[step] = tsr
            row["val_tsr"] = tsr
            log.info("step %d val_tsr %.3f", step, tsr)
        result.metrics.append(row)
        if metrics_path is not None:
            with metrics_path.open("a") as fh:
                fh.write(json.dumps(row) + "\n")
        if progress_every and step % progress_every == 0:
            log.info("step %d loss %.4f (%.1fs)", step, total.item(), time.perf_counter() - t0)
        if at_val and run_dir is not None:
            _select_best(result, val, run_dir)
    model.eval()
    if run_dir is not None:
        _select_best(result, val, run_dir)
    return result


def _select_best(result: TrainResult, val: dict, run_dir: Path) -> None:
    if val:
        # earliest step among ties
        best_step = max(sorted(val), key=lambda s: val[s])
        result.best = run_dir / f"ckpt_{best_step:06d}.lvck"
        result.best_val_tsr = val[best_step]
    elif result.checkpoints:
        result.best = result.checkpoints[-1]
    _write_manifest(run_dir, result, val)
