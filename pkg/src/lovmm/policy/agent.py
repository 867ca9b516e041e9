"""Inference wrapper around :class:`LovmmModel` plus checkpoint IO."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from lovmm import io
from lovmm.actions import Action, Observation, PickPose, PlacePose
from lovmm.config import ModelConfig
from lovmm.encoders import TextEncoder
from lovmm.errors import ShapeMismatch
from lovmm.policy import ops
from lovmm.policy.model import NETS, LovmmModel, correlate_fft, obs_tensor

CKPT_MAGIC = b"LVCK"
CKPT_VERSION = 1


@dataclass
class AffordanceMaps:
    Q_pick: np.ndarray            # (H, W)
    Q_place: np.ndarray           # (H, W, k)
    pick: PickPose
    place: PlacePose
    dof_raw: np.ndarray | None = None


def clamp_dof(raw, cfg: ModelConfig) -> tuple[float, float, float]:
    r = cfg.dof_ranges
    roll = float(np.clip(raw[0], *r["roll"]))
    pitch = float(np.clip(raw[1], *r["pitch"]))
    z = float(np.clip(raw[2], *r["z"]))
    return roll, pitch, z


class Policy:
    """Language-conditioned pick/place policy.

    ``act`` takes separate pick and place observations; passing the same
    object twice gives the single-workspace pipeline. Place values come from
    the FFT correlation by default; ``direct_correlation=True`` routes them
    through the compiled sliding-window kernel instead.
    """

    def __init__(self, cfg: ModelConfig | None = None, model: LovmmModel | None = None,
                 text_encoder: TextEncoder | None = None, direct_correlation: bool = False):
        self.direct_correlation = direct_correlation
        self.cfg = cfg or (model.cfg if model is not None else ModelConfig())
        self.model = model or LovmmModel(self.cfg)
        self.text = text_encoder or TextEncoder(self.cfg.text_dim)
        self._g: dict[str, torch.Tensor] = {}

    @property
    def dtype(self):
        return next(self.model.parameters()).dtype

    def embed(self, lm: str) -> torch.Tensor:
        g = self._g.get(lm)
        if g is None or g.dtype != self.dtype:
            g = torch.as_tensor(self.text.encode(lm)[None], dtype=self.dtype)
            self._g[lm] = g
        return g

    def tensor(self, obs: Observation) -> torch.Tensor:
        H, W = self.cfg.H, self.cfg.W
        if obs.depth.shape != (H, W) or obs.color.shape != (H, W, 3):
            raise ShapeMismatch(f"observation {obs.color.shape} does not match model {H}x{W}")
        return obs_tensor(obs.color, obs.depth, self.dtype)

    def forward_stream(self, net_id: str, obs: Observation, lm: str, trace: dict | None = None) -> np.ndarray:
        """Output of one net on one observation, ``(H, W, channels)``."""
        if net_id not in NETS:
            raise ValueError(f"net_id must be one of {NETS}")
        with torch.no_grad():
            out, _ = self.model.run(net_id, self.tensor(obs), self.embed(lm), trace=trace)
        return out[0].permute(1, 2, 0).double().numpy()

    def predict_pick(self, obs: Observation, lm: str) -> tuple[np.ndarray, PickPose]:
        Q = self.forward_stream("f_pick", obs, lm)[..., 0]
        return ops.predict_pick(Q)

    def affordances(self, obs_pick: Observation, obs_place: Observation, lm: str) -> AffordanceMaps:
        m = self.model
        g = self.embed(lm)
        with torch.no_grad():
            x_p = self.tensor(obs_pick)
            x_q = x_p if obs_place is obs_pick else self.tensor(obs_place)
            feats_p = m.visual(x_p)
            feats_q = feats_p if x_q is x_p else m.visual(x_q)
            q, _ = m.run("f_pick", x_p, g, feats_p)
            Q_pick = q[0, 0].double().numpy()
            pick = ops.argmax_pick(Q_pick)
            tmpl, t_extra = m.template_features(x_p, g, pick.u, pick.v, feats_p)
            key, k_extra = m.run("phi", x_q, g, feats_q)
            if self.direct_correlation:
                template = tmpl.permute(1, 2, 0).double().numpy()
                Q_place, place = ops.predict_place(key[0].permute(1, 2, 0).double().numpy(), template,
                                                   self.cfg.k)
            else:
                Q_place = correlate_fft(m.rotate(tmpl), key[0]).permute(1, 2, 0).double().numpy()
                u, v, i = ops.argmax_place(Q_place)
                place = PlacePose(u, v, i)
            raw = None
            if m.dof is not None:
                raw = m.dof_from(t_extra, k_extra[0], place.u, place.v, place.yaw_index).double().numpy()
        return AffordanceMaps(Q_pick, Q_place, pick, place, raw)

    def predict_dof(self, maps: AffordanceMaps) -> tuple[float, float, float]:
        if maps.dof_raw is None:
            return 0.0, 0.0, 0.0
        return clamp_dof(maps.dof_raw, self.cfg)

    def act(self, obs_pick: Observation, obs_place: Observation, lm: str,
            pick_workspace: str | None = None, place_workspace: str | None = None) -> Action:
        maps = self.affordances(obs_pick, obs_place, lm)
        roll, pitch, z = self.predict_dof(maps)
        p = maps.place
        return Action(
            maps.pick, PlacePose(p.u, p.v, p.yaw_index, roll, pitch, z),
            pick_workspace or obs_pick.workspace_id, place_workspace or obs_place.workspace_id,
        )

    # -- checkpoints --------------------------------------------------------------------
    def save(self, path, step: int = 0, optimizer: torch.optim.Optimizer | None = None,
             meta: dict | None = None) -> None:
        arrays = {f"param.{k}": v.detach().cpu().numpy() for k, v in self.model.state_dict().items()}
        header = {"version": CKPT_VERSION, "model": self.cfg.to_dict(), "step": int(step),
                  "meta": meta or {}, "dtype": str(self.dtype).replace("torch.", "")}
        if optimizer is not None:
            sd = optimizer.state_dict()
            header["opt_groups"] = [{k: (list(v) if isinstance(v, tuple) else v) for k, v in g.items()}
                                    for g in sd["param_groups"]]
            for idx, st in sd["state"].items():
                for name, val in st.items():
                    arrays[f"opt.{idx}.{name}"] = torch.as_tensor(val).detach().cpu().numpy()
        io.save_bundle(path, CKPT_MAGIC, header, arrays)

    @classmethod
    def load(cls, path, optimizer_factory=None):
        """Returns ``(policy, header, optimizer_or_None)``."""
        header, arrays = io.load_bundle(path, CKPT_MAGIC)
        if header["version"] != CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        cfg = ModelConfig.from_dict(header["model"])
        model = LovmmModel(cfg)
        if header.get("dtype") == "float64":
            model = model.double()
        state = {k[len("param."):]: torch.from_numpy(np.array(v)) for k, v in arrays.items()
                 if k.startswith("param.")}
        model.load_state_dict(state)
        policy = cls(cfg, model)
        opt = None
        if optimizer_factory is not None and "opt_groups" in header:
            opt = optimizer_factory(model.trainable())
            sd = opt.state_dict()
            groups = []
            for g in header["opt_groups"]:
                g = dict(g)
                if "betas" in g:
                    g["betas"] = tuple(g["betas"])
                groups.append(g)
            state: dict = {}
            for k, v in arrays.items():
                if k.startswith("opt."):
                    _, idx, name = k.split(".", 2)
                    state.setdefault(int(idx), {})[name] = torch.from_numpy(np.array(v))
            sd["param_groups"] = groups
            sd["state"] = state
            opt.load_state_dict(sd)
        return policy, header, opt
