"""Two-stream networks and the full pick/place/DoF model (torch).

Each of the three nets (``f_pick``, ``psi``, ``phi``) has

* a semantic stream: frozen image encoder, then trainable decoder layers,
  each multiplied elementwise by the language embedding projected to that
  layer's width and tiled over space;
* a spatial stream: an RGB-D hourglass with residual bottleneck blocks;
* lateral fusion at every decoder layer: concatenate the two streams and
  reduce ``C_v + C_d -> C_v`` with a 1x1 convolution.

``psi`` and ``phi`` also expose 1x1-conv projections of their last fused
features (``psi'``/``phi'``, ``d_prime`` channels) for the DoF heads.
"""
from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from lovmm.config import ModelConfig
from lovmm.policy.ops import rotation_operators

NETS = ("f_pick", "psi", "phi")


class FrozenImageEncoder(nn.Module):
    """Seeded random strided convolutions; never trained."""

    def __init__(self, channels: int, layers: int, seed: int):
        super().__init__()
        gen = torch.Generator().manual_seed(10_007 + seed)
        self.weights = []
        c_in = 3
        for i in range(layers):
            w = torch.randn(channels, c_in, 3, 3, generator=gen) * math.sqrt(2.0 / (9 * c_in))
            b = torch.randn(channels, generator=gen) * 0.1
            self.register_buffer(f"w{i}", w)
            self.register_buffer(f"b{i}", b)
            c_in = channels
        self.layers = layers

    def forward(self, rgb: torch.Tensor) -> list[torch.Tensor]:
        """Features at strides 2, 4, ... (finest first)."""
        feats, x = [], rgb
        for i in range(self.layers):
            x = torch.tanh(F.conv2d(x, getattr(self, f"w{i}"), getattr(self, f"b{i}"), stride=2, padding=1))
            feats.append(x)
        return feats


class Residual(nn.Module):
    def __init__(self, ch: int):
        super().__init__()
        self.a = nn.Conv2d(ch, ch, 3, padding=1)
        self.b = nn.Conv2d(ch, ch, 3, padding=1)

    def forward(self, x):
        return F.relu(x + self.b(F.relu(self.a(x))))


def _up(x: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, size=like.shape[-2:], mode="nearest")


class TwoStreamNet(nn.Module):
    def __init__(self, cfg: ModelConfig, out_channels: int, extra_out: int = 0):
        super().__init__()
        L = len(cfg.semantic_channels)
        sem, spa = cfg.semantic_channels, cfg.spatial_channels
        self.L = L
        # spatial encoder (RGB-D)
        self.enc = nn.ModuleList()
        c_in = 4
        for ch in spa:
            self.enc.append(nn.Conv2d(c_in, ch, 3, stride=2, padding=1))
            c_in = ch
        self.bottleneck = nn.Sequential(*[Residual(spa[-1]) for _ in range(cfg.n_bottleneck)])
        # decoders; layer l runs at stride 2**(L-1-l)
        skips_spa = list(spa[:-1][::-1]) + [4]
        skips_sem = [cfg.image_channels] * (L - 1) + [3]
        dec_spa = list(spa[::-1][1:]) + [spa[0]]
        self.dec_spa = nn.ModuleList()
        self.dec_sem = nn.ModuleList()
        self.lang = nn.ModuleList()
        self.fuse = nn.ModuleList()
        prev_spa, prev_sem = spa[-1], cfg.image_channels
        for l in range(L):
            self.dec_spa.append(nn.Conv2d(prev_spa + skips_spa[l], dec_spa[l], 3, padding=1))
            self.dec_sem.append(nn.Conv2d(prev_sem + skips_sem[l], sem[l], 3, padding=1))
            self.lang.append(nn.Linear(cfg.text_dim, sem[l], bias=False))
            self.fuse.append(nn.Conv2d(sem[l] + dec_spa[l], sem[l], 1))
            prev_spa, prev_sem = dec_spa[l], sem[l]
        self.head = nn.Conv2d(sem[-1], out_channels, 1)
        self.extra = nn.Conv2d(sem[-1], extra_out, 1) if extra_out else None

    def forward(self, rgbd: torch.Tensor, img_feats: list[torch.Tensor], g: torch.Tensor,
                trace: dict | None = None):
        """``rgbd`` (B, 4, H, W), frozen features (finest first), ``g`` (B, text_dim).

        Returns ``(out, extra)``; ``extra`` is ``None`` without a 1x1 projection.
        """
        rgb = rgbd[:, :3]
        enc, x = [], rgbd
        for conv in self.enc:
            x = F.relu(conv(x))
            enc.append(x)
        d = self.bottleneck(x)
        v = img_feats[-1]
        skips_spa = enc[:-1][::-1] + [rgbd]
        skips_sem = img_feats[:-1][::-1] + [rgb]
        for l in range(self.L):
            d = F.relu(self.dec_spa[l](torch.cat([_up(d, skips_spa[l]), skips_spa[l]], 1)))
            v = F.relu(self.dec_sem[l](torch.cat([_up(v, skips_sem[l]), skips_sem[l]], 1)))
            gl = self.lang[l](g)[:, :, None, None]
            vg = v * gl
            if trace is not None:
                trace.setdefault("semantic_in", []).append(vg)
                trace.setdefault("spatial_in", []).append(d)
            v = F.relu(self.fuse[l](torch.cat([vg, d], 1)))
        out = self.head(v)
        extra = self.extra(v) if self.extra is not None else None
        return out, extra


class DofHead(nn.Module):
    def __init__(self, d_in: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(d_in, hidden)
        self.fc2 = nn.Linear(hidden, hidden)
        self.fc3 = nn.Linear(hidden, 1)

    def forward(self, x):
        return self.fc3(F.relu(self.fc2(F.relu(self.fc1(x))))).squeeze(-1)


def obs_tensor(color: np.ndarray, depth: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """(H, W, 3) color + (H, W) depth -> normalized (1, 4, H, W)."""
    x = np.concatenate([np.asarray(color) - 0.5, 10.0 * np.asarray(depth)[..., None]], axis=-1)
    return torch.as_tensor(x.transpose(2, 0, 1)[None].copy(), dtype=dtype)


def crop_tensor(feat: torch.Tensor, u: int, v: int, c: int) -> torch.Tensor:
    """(B, C, H, W) -> (B, C, c, c) window at ``(u, v)``, zero padded."""
    half = c // 2
    padded = F.pad(feat, (half, c - half, half, c - half))
    return padded[:, :, u:u + c, v:v + c]


def correlate_fft(templates: torch.Tensor, key: torch.Tensor) -> torch.Tensor:
    """(k, d, c, c) templates x (d, H, W) key -> (k, H, W) same-size correlation."""
    k, d, c, _ = templates.shape
    _, H, W = key.shape
    Hp, Wp = H + c, W + c
    Kf = torch.fft.rfft2(key, s=(Hp, Wp))
    Tf = torch.fft.rfft2(templates, s=(Hp, Wp))
    full = torch.fft.irfft2((Kf[None] * Tf.conj()).sum(1), s=(Hp, Wp))
    rows = (torch.arange(H) - c // 2) % Hp
    cols = (torch.arange(W) - c // 2) % Wp
    return full[:, rows][:, :, cols]


class LovmmModel(nn.Module):
    """``f_pick``, ``psi``, ``phi`` plus the three DoF MLPs."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        torch.manual_seed(cfg.seed)
        L = len(cfg.semantic_channels)
        self.encoder = FrozenImageEncoder(cfg.image_channels, L, cfg.seed)
        dp = cfg.d_prime if cfg.use_dof else 0
        self.f_pick = TwoStreamNet(cfg, 1)
        self.psi = TwoStreamNet(cfg, cfg.d, dp)
        self.phi = TwoStreamNet(cfg, cfg.d, dp)
        self.dof = nn.ModuleList([DofHead(cfg.d_prime // 3, cfg.mlp_hidden) for _ in range(3)]) \
            if cfg.use_dof else None
        self.register_buffer("rot_ops", torch.as_tensor(rotation_operators(cfg.c, cfg.k), dtype=torch.float32))

    # -- helpers ---------------------------------------------------------------
    def trainable(self):
        return [p for p in self.parameters() if p.requires_grad]

    def visual(self, x: torch.Tensor) -> list[torch.Tensor]:
        with torch.no_grad():
            return self.encoder(x[:, :3])

    def run(self, net_id: str, x: torch.Tensor, g: torch.Tensor, feats=None, trace=None):
        net = getattr(self, net_id)
        feats = self.visual(x) if feats is None else feats
        return net(x, feats, g, trace)

    def rotate(self, template: torch.Tensor, bins=None) -> torch.Tensor:
        """(d, c, c) -> (n, d, c, c) rotated copies for ``bins`` (default all)."""
        d, c, _ = template.shape
        ops = self.rot_ops.to(template.dtype)
        if bins is not None:
            ops = ops[bins]
        flat = template.reshape(d, c * c)
        return torch.einsum("kpq,dq->kdp", ops, flat).reshape(-1, d, c, c)

    def template_features(self, x_pick, g, u: int, v: int, feats=None):
        """Query features around the pick, from cropped features or (ablation) a cropped input."""
        c = self.cfg.c
        if self.cfg.crop_input:
            crop = crop_tensor(x_pick, u, v, c)
            out, extra = self.run("psi", crop, g)
            return out[0], (extra[0] if extra is not None else None)
        out, extra = self.run("psi", x_pick, g, feats)
        t = crop_tensor(out, u, v, c)[0]
        te = crop_tensor(extra, u, v, c)[0] if extra is not None else None
        return t, te

    def dof_from(self, t_extra: torch.Tensor, k_extra: torch.Tensor, u: int, v: int, yaw: int) -> torch.Tensor:
        """Raw (unclamped) roll, pitch, z from the psi'/phi' subsets at one place pose."""
        c = self.cfg.c
        n = self.cfg.d_prime // 3
        window = crop_tensor(k_extra[None], u, v, c)[0]
        rot = self.rotate(t_extra, bins=[yaw])[0]
        resp = (rot * window).sum(dim=(1, 2))
        return torch.stack([self.dof[s](resp[s * n:(s + 1) * n]) for s in range(3)])

    def forward_sample(self, x_pick, x_place, g, pick, place):
        """Training forward with expert poses. Returns ``(Q_pick (H,W), Q_place (H,W,k), dof or None)``."""
        feats_p = self.visual(x_pick)
        feats_q = feats_p if x_place is x_pick else self.visual(x_place)
        q_pick, _ = self.run("f_pick", x_pick, g, feats_p)
        tmpl, t_extra = self.template_features(x_pick, g, pick[0], pick[1], feats_p)
        key, k_extra = self.run("phi", x_place, g, feats_q)
        Q_place = correlate_fft(self.rotate(tmpl), key[0]).permute(1, 2, 0)
        dof = None
        if self.dof is not None:
            dof = self.dof_from(t_extra, k_extra[0], place[0], place[1], place[2])
        return q_pick[0, 0], Q_place, dof
