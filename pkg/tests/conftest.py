from __future__ import annotations

import numpy as np
import pytest
import torch

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_demos(tmp_path_factory):
    """Two packA demonstrations at a reduced 40x80 resolution."""
    from lovmm.sim.dataset import collect_demos, load_dataset

    out = tmp_path_factory.mktemp("demos") / "packA"
    collect_demos("packA", 2, 0, out, H=40, W=80, k=36)
    return out, load_dataset(out)


def small_model_config(**kw):
    from lovmm.config import ModelConfig

    base = dict(H=40, W=80, c=8, k=36, image_channels=16, semantic_channels=(16, 8),
                spatial_channels=(8, 16), n_bottleneck=1, text_dim=256, mlp_hidden=16,
                workspace_extent=(0.4, 0.8))
    base.update(kw)
    return ModelConfig(**base)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in mod.TITLES.items():
        if n in mod.RESULTS:
            ok, detail = mod.RESULTS[n]
            terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {title}: {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d} FAIL: {title}: did not run to completion")
