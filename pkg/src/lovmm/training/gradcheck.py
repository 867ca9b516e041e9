"""Finite-difference check of the training-loss gradients."""
from __future__ import annotations

import numpy as np
import torch

from lovmm.actions import Action, Observation, PickPose, PlacePose
from lovmm.config import ModelConfig
from lovmm.policy.agent import Policy
from lovmm.training.targets import TrainingSample
from lovmm.training.trainer import sample_loss


def random_sample(cfg: ModelConfig, seed: int = 0, same_observation: bool = False) -> TrainingSample:
    """Random observations and an in-bounds expert action at the config's size."""
    rng = np.random.default_rng(seed)
    H, W, k = cfg.H, cfg.W, cfg.k

    def obs(ws):
        return Observation(rng.random((H, W, 3)), rng.random((H, W)) * 0.1, cfg.pixel_size, ws)

    o1 = obs("ws0")
    o2 = o1 if same_observation else obs("ws1")
    act = Action(PickPose(int(rng.integers(H)), int(rng.integers(W))),
                 PlacePose(int(rng.integers(H)), int(rng.integers(W)), int(rng.integers(k)),
                           float(rng.uniform(-0.3, 0.3)), float(rng.uniform(-0.3, 0.3)),
                           float(rng.uniform(0, 0.1))),
                 o1.workspace_id, o2.workspace_id)
    return TrainingSample(o1, o2, "pick the red block", act)


def total_loss(policy: Policy, sample: TrainingSample) -> torch.Tensor:
    l2, l3 = sample_loss(policy, sample)
    return l2 + (l3 if l3 is not None else 0.0)


def _central(policy, sample, view, j, orig, eps) -> float:
    view[j] = orig + eps
    up = float(total_loss(policy, sample))
    view[j] = orig - eps
    down = float(total_loss(policy, sample))
    view[j] = orig
    return (up - down) / (2 * eps)


def _noise(loss: float, eps: float) -> float:
    """Generous bound on the rounding noise of a central difference at width ``eps``."""
    return 1e3 * np.finfo(np.float64).eps * max(loss, 1.0) / eps


def grad_check(policy: Policy, sample: TrainingSample, epsilon: float = 1e-4, n_coords: int = 50,
               seed: int = 0, floor: float = 1e-7, details: dict | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    Coordinates are drawn uniformly over all trainable parameters. The
    relative error is ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps
    coordinates with vanishing gradient from dividing by rounding noise.

    The loss is only piecewise smooth (ReLU). When the stencils at ``epsilon``
    and ``epsilon / 2`` disagree, a kink lies inside ``[-epsilon, epsilon]``
    and the difference quotient there is not a derivative estimate; such a
    coordinate is re-measured with a stencil shrunk by 10x (down to 1e-6)
    until the two widths agree to within rounding noise. ``details`` (if given) receives the number of
    refined coordinates and the per-coordinate errors.
    Run in float64 (``policy.model.double()``) for meaningful results.
    """
    params = policy.model.trainable()
    policy.model.zero_grad()
    loss = total_loss(policy, sample)
    loss.backward()
    base = abs(loss.item())
    sizes = np.array([p.numel() for p in params])
    rng = np.random.default_rng(seed)
    flat = rng.choice(int(sizes.sum()), size=min(n_coords, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst, refined, errs = 0.0, 0, []
    with torch.no_grad():
        for f in flat:
            pi = int(np.searchsorted(offsets, f, side="right") - 1)
            p = params[pi]
            j = int(f - offsets[pi])
            view = p.view(-1)
            analytic = float(p.grad.view(-1)[j])
            orig = float(view[j])
            eps = epsilon
            numeric = _central(policy, sample, view, j, orig, eps)
            half = _central(policy, sample, view, j, orig, eps / 2)
            bumped = False
            while (abs(numeric - half) > max(1e-4 * max(abs(numeric), abs(half)), _noise(base, eps / 2))
                   and eps > 1e-6):
                bumped = True
                eps /= 10
                numeric = _central(policy, sample, view, j, orig, eps)
                half = _central(policy, sample, view, j, orig, eps / 2)
            refined += bumped
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            errs.append(err)
            worst = max(worst, err)
    if details is not None:
        details.update(refined=refined, errors=errs)
    return worst
