from __future__ import annotations

import json
import math

import numpy as np
import pytest

from lovmm import io
from lovmm.cli import main
from lovmm.policy import Policy
from lovmm.sim.dataset import load_episode
from lovmm.sim.tasks import generate_scene

SMALL = ["--set", "model.H=40", "--set", "model.W=80", "--set", "model.c=8",
         "--set", "model.image_channels=8", "--set", "model.semantic_channels=(8,4)",
         "--set", "model.spatial_channels=(4,8)", "--set", "model.n_bottleneck=1",
         "--set", "model.text_dim=64", "--set", "model.mlp_hidden=8"]


def _json(capsys):
    return json.loads(capsys.readouterr().out)


@pytest.fixture(scope="module")
def small_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "data"
    assert main(["demos", "--task", "packA", "--n", "2", "--seed", "1", "--out", str(out),
                 "--H", "40", "--W", "80"]) == 0
    return out


@pytest.fixture(scope="module")
def small_run(small_data, tmp_path_factory):
    run = tmp_path_factory.mktemp("cli") / "run"
    code = main(["train", "--data", str(small_data), "--out", str(run), *SMALL,
                 "--set", "train.steps=6", "--set", "train.val_interval=3", "--set", "train.val_episodes=1"])
    assert code == 0
    return run


def test_demos_writes_episodes(small_data):
    assert len(list(small_data.glob("episode_*"))) == 2
    assert json.loads((small_data / "dataset.json").read_text())["n"] == 2


def test_demos_rerun_identical(small_data, tmp_path):
    out = tmp_path / "again"
    assert main(["demos", "--task", "packA", "--n", "2", "--seed", "1", "--out", str(out),
                 "--H", "40", "--W", "80"]) == 0
    for f in small_data.rglob("*"):
        if f.is_file():
            assert f.read_bytes() == (out / f.relative_to(small_data)).read_bytes()


def test_bad_task_exit_2(capsys):
    assert main(["demos", "--task", "nope", "--n", "1"]) == 2
    err = capsys.readouterr().err
    assert "packA" in err and "towels6dofP" in err


def test_unknown_config_key_exit_2(small_data, tmp_path):
    assert main(["train", "--data", str(small_data), "--out", str(tmp_path), "--set", "model.nope=1"]) == 2
    assert main(["train", "--data", str(small_data), "--out", str(tmp_path), "--set", "bogus"]) == 2


def test_train_size_mismatch_exit_2(small_data, tmp_path):
    assert main(["train", "--data", str(small_data), "--out", str(tmp_path)]) == 2


def test_missing_dataset_exit_2(tmp_path):
    assert main(["train", "--data", str(tmp_path / "none"), "--out", str(tmp_path)]) == 2


def test_train_outputs(small_run):
    rows = [json.loads(x) for x in (small_run / "metrics.jsonl").read_text().splitlines()]
    assert len(rows) == 6
    assert [r["val_tsr"] is not None for r in rows] == [False, False, True, False, False, True]
    man = json.loads((small_run / "manifest.json").read_text())
    assert man["best"] in man["checkpoints"]
    assert "[model]" in (small_run / "config.ini").read_text()


def test_train_ablation_and_resume(small_data, small_run, tmp_path):
    for abl in ("no_augmentation", "crop_input", "no_bottleneck", "dof3"):
        assert main(["train", "--data", str(small_data), "--out", str(tmp_path / abl), *SMALL,
                     "--ablation", abl, "--set", "train.steps=2", "--set", "train.val_episodes=0"]) == 0
        _, header, _ = Policy.load(tmp_path / abl / "ckpt_000002.lvck")
        assert header["meta"]["ablation"] == abl
    ck = small_run / "ckpt_000003.lvck"
    code = main(["train", "--data", str(small_data), "--out", str(tmp_path / "res"), *SMALL,
                 "--set", "train.steps=6", "--set", "train.val_interval=3", "--set", "train.val_episodes=1",
                 "--resume", str(ck)])
    assert code == 0
    full = [json.loads(x)["loss_2d"] for x in (small_run / "metrics.jsonl").read_text().splitlines()]
    res = [json.loads(x)["loss_2d"] for x in (tmp_path / "res" / "metrics.jsonl").read_text().splitlines()]
    assert res[-3:] == full[-3:]


def test_eval_checkpoint_and_baselines(small_run, tmp_path, capsys):
    ck = small_run / "ckpt_000006.lvck"
    code = main(["eval", "--checkpoint", f"1={ck}", "--checkpoint", f"10={ck}", "--tasks", "packA", "bowlF",
                 "--episodes", "1", "--out", str(tmp_path / "ev"), "--no-plots"])
    assert code == 0
    out = _json(capsys)
    assert len(out["rows"]) == 4
    assert len((tmp_path / "ev" / "tsr.csv").read_text().strip().splitlines()) == 1 + 4
    assert main(["eval", "--policy", "oracle", "--tasks", "kitD", "--episodes", "2",
                 "--out", str(tmp_path / "or")]) == 0
    out = _json(capsys)
    assert out["rows"][0]["tsr"] == 1.0
    assert (tmp_path / "or" / "tsr_noracle.png").exists()


def test_eval_missing_checkpoint_exit_2(tmp_path):
    assert main(["eval", "--checkpoint", str(tmp_path / "x.lvck"), "--out", str(tmp_path)]) == 2


def test_map_build_locate(tmp_path, capsys):
    a, b = tmp_path / "a.lvmp", tmp_path / "b.lvmp"
    assert main(["map", "build", "--task", "foodK", "--seed", "0", "--out", str(a)]) == 0
    assert main(["map", "build", "--task", "foodK", "--seed", "0", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    capsys.readouterr()
    assert main(["map", "locate", "--map", str(a), "desk"]) == 0
    out = _json(capsys)
    desk = generate_scene("foodK", 0).workspace_by_name("office room desk")
    err = math.dist(out["target"]["position"], desk.center)
    assert err <= 0.05 / 2
    assert out["unobserved_cells"] == 0


def test_map_locate_unknown_word_exit_4(tmp_path):
    m = tmp_path / "m.lvmp"
    assert main(["map", "build", "--task", "foodK", "--out", str(m)]) == 0
    assert main(["map", "locate", "--map", str(m), "zebra"]) == 4
    assert main(["map", "locate", "--map", str(tmp_path / "none"), "desk"]) == 2


def test_viz_outputs(small_run, small_data, tmp_path, capsys):
    ck = small_run / "ckpt_000006.lvck"
    ep = small_data / "episode_0000"
    runs = []
    for name in ("v1", "v2"):
        capsys.readouterr()
        assert main(["viz", "--checkpoint", str(ck), "--episode", str(ep), "--out", str(tmp_path / name)]) == 0
        runs.append(_json(capsys))
    import matplotlib.image as mpimg

    names = ("q_pick.png", "q_pick_overlay.png", "q_place.png", "q_place_overlay.png")
    for n in names:
        img = mpimg.imread(tmp_path / "v1" / n)
        assert img.shape[:2] == (40, 80)
        assert (tmp_path / "v1" / n).read_bytes() == (tmp_path / "v2" / n).read_bytes()
    policy, _, _ = Policy.load(ck)
    st = load_episode(ep).steps[0]
    Q = io.load_array(tmp_path / "v1" / "q_pick.arr")
    _, pk = policy.predict_pick(st.obs_pick, st.lm)
    assert np.unravel_index(np.argmax(Q), Q.shape) == (pk.u, pk.v)
    heat = mpimg.imread(tmp_path / "v1" / "q_pick.png")[..., 0]
    assert heat[pk.u, pk.v] == heat.max()
    assert runs[0]["pick"] == runs[1]["pick"]


def test_viz_missing_inputs_exit_2(tmp_path):
    assert main(["viz", "--checkpoint", str(tmp_path / "a"), "--episode", str(tmp_path / "b")]) == 2


def test_parse_prints_json(capsys):
    assert main(["parse", "pack all the red blocks on the bedroom sofa to the brown box"]) == 0
    out = _json(capsys)
    assert out["steps"] == [{"manipulation": "pack all the red blocks to the brown box",
                             "role": "combined", "workspace": "the bedroom sofa"}]
    assert main(["parse", "dance wildly"]) == 2


def test_parse_llm_backend_without_endpoint(monkeypatch, capsys):
    monkeypatch.delenv("LOVMM_LLM_ENDPOINT", raising=False)
    code = main(["parse", "pack all the red blocks on the bedroom sofa to the brown box", "--backend", "llm"])
    assert code == 0
    assert _json(capsys)["steps"][0]["workspace"] == "the bedroom sofa"
