from __future__ import annotations

import math

import numpy as np
import pytest
import torch

from lovmm.actions import Observation
from lovmm.config import ModelConfig
from lovmm.errors import ShapeMismatch
from lovmm.policy import Policy, clamp_dof
from lovmm.policy import ops
from lovmm.policy.model import LovmmModel, correlate_fft, crop_tensor

from conftest import small_model_config


def _obs(cfg, seed, ws="ws0"):
    r = np.random.default_rng(seed)
    return Observation(r.random((cfg.H, cfg.W, 3)), r.random((cfg.H, cfg.W)) * 0.1, cfg.pixel_size, ws)


@pytest.fixture(scope="module")
def tiny():
    return Policy(ModelConfig.preset("tiny"))


def test_output_shapes(tiny):
    cfg = tiny.cfg
    o = _obs(cfg, 0)
    assert tiny.forward_stream("f_pick", o, "pick the red block").shape == (cfg.H, cfg.W, 1)
    for net in ("psi", "phi"):
        assert tiny.forward_stream(net, o, "x").shape == (cfg.H, cfg.W, cfg.d)
    with pytest.raises(ValueError):
        tiny.forward_stream("nope", o, "x")


def test_zero_language_zeroes_semantic_input(tiny):
    m = tiny.model
    x = tiny.tensor(_obs(tiny.cfg, 1))
    trace = {}
    with torch.no_grad():
        m.run("f_pick", x, torch.zeros(1, tiny.cfg.text_dim), trace=trace)
    assert len(trace["semantic_in"]) == len(tiny.cfg.semantic_channels)
    for t in trace["semantic_in"]:
        assert torch.count_nonzero(t) == 0
    assert any(torch.count_nonzero(d) > 0 for d in trace["spatial_in"])


def test_shape_mismatch(tiny):
    bad = Observation(np.zeros((4, 4, 3)), np.zeros((4, 4)), 0.01, "w")
    with pytest.raises(ShapeMismatch):
        tiny.act(bad, bad, "x")


def test_nan_free_random_batches():
    cfg = small_model_config()
    p = Policy(cfg)
    for s in range(3):
        o = _obs(cfg, s)
        maps = p.affordances(o, _obs(cfg, s + 10, "ws1"), "pack the blue blocks")
        assert np.isfinite(maps.Q_pick).all() and np.isfinite(maps.Q_place).all()
        assert np.isfinite(maps.dof_raw).all()


def test_fft_matches_direct_kernel(rng):
    k, d, c, H, W = 5, 3, 6, 12, 14
    T = torch.as_tensor(rng.normal(size=(k, d, c, c)))
    K = torch.as_tensor(rng.normal(size=(d, H, W)))
    fft = correlate_fft(T, K).permute(1, 2, 0).numpy()
    from lovmm import kernels

    ref = kernels.correlate(T.numpy().transpose(0, 2, 3, 1), K.numpy().transpose(1, 2, 0))
    np.testing.assert_allclose(fft, ref, atol=1e-10)


def test_direct_and_fft_inference_agree():
    cfg = ModelConfig.preset("tiny")
    a = Policy(cfg)
    b = Policy(cfg, a.model, direct_correlation=True)
    o1, o2 = _obs(cfg, 3), _obs(cfg, 4, "ws1")
    ma, mb = a.affordances(o1, o2, "x"), b.affordances(o1, o2, "x")
    np.testing.assert_allclose(ma.Q_place, mb.Q_place, atol=1e-4)


def test_crop_tensor_matches_numpy(rng):
    f = rng.normal(size=(3, 7, 9))
    t = crop_tensor(torch.as_tensor(f)[None], 1, 8, 4)[0].numpy()
    np.testing.assert_allclose(t.transpose(1, 2, 0), ops.crop_query(f.transpose(1, 2, 0), (1, 8), 4))


def test_model_rotation_matches_ops(rng):
    cfg = ModelConfig.preset("tiny")
    m = LovmmModel(cfg).double()
    T = rng.normal(size=(cfg.c, cfg.c, cfg.d))
    got = m.rotate(torch.as_tensor(T.transpose(2, 0, 1))).numpy().transpose(0, 2, 3, 1)
    np.testing.assert_allclose(got, ops.rotate_templates(T, cfg.k), atol=1e-12)


def test_single_observation_aliasing_and_determinism(tiny):
    o = _obs(tiny.cfg, 5)
    a1 = tiny.act(o, o, "pick the red block")
    a2 = tiny.act(o, o, "pick the red block")
    assert a1 == a2
    assert a1.pick_workspace == a1.place_workspace == "ws0"


def test_cross_workspace_planted_template():
    """Planted features: the place argmax lands where the query crop was copied in obs_place."""
    cfg = ModelConfig.preset("tiny")
    p = Policy(cfg, direct_correlation=True)
    r = np.random.default_rng(0)
    psi = r.normal(size=(cfg.H, cfg.W, cfg.d))
    pick = (4, 5)
    tmpl = ops.crop_query(psi, pick, cfg.c)
    phi = np.zeros((cfg.H, cfg.W, cfg.d))
    target = (3, 10)
    phi[target[0] - cfg.c // 2:target[0] + cfg.c // 2, target[1] - cfg.c // 2:target[1] + cfg.c // 2] = tmpl
    _, pose = ops.predict_place(phi, tmpl, cfg.k)
    assert (pose.u, pose.v, pose.yaw_index) == (*target, 0)


def test_dof_zero_head_and_clamp():
    cfg = small_model_config()
    p = Policy(cfg)
    for head in p.model.dof:
        torch.nn.init.zeros_(head.fc3.weight)
        torch.nn.init.zeros_(head.fc3.bias)
    o = _obs(cfg, 7)
    assert p.predict_dof(p.affordances(o, o, "x")) == (0.0, 0.0, 0.0)
    assert clamp_dof([10.0, -10.0, 10.0], cfg) == (pytest.approx(math.pi / 4), pytest.approx(-math.pi / 4),
                                                   pytest.approx(cfg.z_max))
    assert clamp_dof([0.1, 0.2, -1.0], cfg)[2] == 0.0


def test_dof3_ablation_has_no_heads():
    cfg = ModelConfig.preset("tiny")
    cfg.use_dof = False
    p = Policy(cfg)
    o = _obs(cfg, 8)
    a = p.act(o, o, "x")
    assert p.model.dof is None
    assert (a.place.roll, a.place.pitch, a.place.z) == (0.0, 0.0, 0.0)


def test_checkpoint_round_trip(tmp_path, tiny):
    o = _obs(tiny.cfg, 9)
    opt = torch.optim.Adam(tiny.model.trainable(), lr=1e-3)
    tiny.save(tmp_path / "c.lvck", step=7, optimizer=opt, meta={"n": 1})
    p2, header, opt2 = Policy.load(tmp_path / "c.lvck", lambda ps: torch.optim.Adam(ps, lr=1e-3))
    assert header["step"] == 7 and header["meta"] == {"n": 1}
    assert p2.act(o, o, "x") == tiny.act(o, o, "x")
    assert opt2 is not None


def test_frozen_encoder_has_no_parameters(tiny):
    assert list(tiny.model.encoder.parameters()) == []
    n = sum(p.numel() for p in tiny.model.trainable())
    assert n == sum(p.numel() for p in tiny.model.parameters())
