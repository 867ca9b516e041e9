from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lovmm.encoders import OraclePixelEmbedder, TextEncoder
from lovmm.errors import DimensionMismatch, EmptyFrameSet, LabelNotFound, UnreachableTarget
from lovmm.sim.scene import scene_frames
from lovmm.sim.tasks import generate_scene
from lovmm.vlmap import (
    CameraPose,
    Frame,
    LabelMap,
    MapConfig,
    QuerySet,
    VLMap,
    backproject,
    build_map,
    localize,
    navigate,
    target_position,
)


class FixedEmbedder:
    """Embeds every pixel with a supplied (H, W, C) array."""

    def __init__(self, table):
        self.table = np.asarray(table, dtype=float)
        self.embedding_dim = self.table.shape[-1]

    def embed_pixels(self, image, depth, labels=None, label_names=None):
        return self.table


def _frame(depth, x=0.0, y=0.0, h=2.0, ps=0.05):
    H, W = depth.shape
    return Frame(np.zeros((H, W, 3)), depth, CameraPose(x, y, h), ps)


def _map(Q, shape, res=0.05):
    Hg, Wg = shape
    return VLMap(np.asarray(Q, float), shape, res, (0.0, 0.0), np.zeros(shape), np.ones(shape, dtype=int))


def test_single_pixel_cell_and_mean():
    # 1x2 frame centered so both pixels fall in cell (3, 4)
    ps = 0.02
    f = Frame(np.zeros((1, 2, 3)), np.full((1, 2), 1.0), CameraPose(4.5 * 0.05, 3.5 * 0.05, 2.0), ps)
    e = np.array([[[1.0, 0.0], [0.0, 1.0]]])
    m = build_map([f], FixedEmbedder(e), MapConfig((8, 8), 0.05, (0, 0), 2))
    idx = 3 * 8 + 4
    assert m.counts[3, 4] == 2
    np.testing.assert_allclose(m.Q[idx], [0.5, 0.5])
    assert m.counts.sum() == 2
    np.testing.assert_allclose(m.height[3, 4], 1.0)


def test_zero_depth_dropped():
    f = _frame(np.array([[0.0, 1.0]]), x=0.25, y=0.25)
    m = build_map([f], FixedEmbedder(np.ones((1, 2, 2))), MapConfig((10, 10), 0.05, (0, 0), 2))
    assert m.counts.sum() == 1 and m.stats["dropped_depth"] == 1


def test_build_errors():
    with pytest.raises(EmptyFrameSet):
        build_map([], FixedEmbedder(np.ones((1, 1, 2))), MapConfig(embedding_dim=2))
    with pytest.raises(DimensionMismatch):
        build_map([_frame(np.ones((1, 1)))], FixedEmbedder(np.ones((1, 1, 3))), MapConfig(embedding_dim=2))


def test_backproject_yaw():
    f = Frame(np.zeros((1, 2, 3)), np.ones((1, 2)), CameraPose(1.0, 1.0, 2.0, np.pi / 2), 0.1)
    pts, ok = backproject(f)
    np.testing.assert_allclose(pts[0, 1, :2], [1.0, 1.05], atol=1e-12)
    np.testing.assert_allclose(pts[0, 0, :2], [1.0, 0.95], atol=1e-12)
    assert ok.all()


def test_frame_order_independent(rng):
    frames, tables = [], []
    for i in range(4):
        d = rng.uniform(0.5, 1.5, (6, 6))
        frames.append(_frame(d, x=0.3 + 0.05 * i, y=0.3, ps=0.03))
        tables.append(rng.normal(size=(6, 6, 5)))

    class Seq:
        embedding_dim = 5

        def __init__(self, order):
            self.it = iter([tables[i] for i in order])

        def embed_pixels(self, *a, **k):
            return next(self.it)

    cfg = MapConfig((20, 20), 0.05, (0, 0), 5)
    a = build_map(frames, Seq(range(4)), cfg)
    perm = [2, 0, 3, 1]
    b = build_map([frames[i] for i in perm], Seq(perm), cfg)
    np.testing.assert_allclose(a.Q, b.Q, atol=1e-6)


def test_localize_examples():
    m = _map([[1, 0], [0, 1]], (1, 2))
    lm = localize(m, QuerySet(["a", "b"], np.eye(2)))
    assert lm.M_c.tolist() == [0, 1]
    m = _map([[0.6, 0.8]], (1, 1))
    assert localize(m, QuerySet(["a", "b"], np.eye(2))).M_c.tolist() == [1]


def test_localize_brute_force(rng):
    Q = rng.normal(size=(20, 6))
    E = rng.normal(size=(4, 6))
    E /= np.linalg.norm(E, axis=1, keepdims=True)
    lm = localize(_map(Q, (4, 5)), QuerySet(list("abcd"), E))
    for c in range(20):
        best = max(range(4), key=lambda j: (float(Q[c] @ E[j]), -j))
        assert lm.M_c[c] == best


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 10.0))
def test_localize_permutation_and_scale(seed, scale):
    r = np.random.default_rng(seed)
    Q = r.normal(size=(12, 4))
    E = r.normal(size=(3, 4))
    base = localize(_map(Q, (3, 4)), QuerySet(list("abc"), E)).M_c
    perm = r.permutation(3)
    permuted = localize(_map(Q, (3, 4)), QuerySet([list("abc")[i] for i in perm], E[perm])).M_c
    assert np.array_equal(perm[permuted], base)
    assert np.array_equal(localize(_map(Q * scale, (3, 4)), QuerySet(list("abc"), E)).M_c, base)


def test_unobserved_sentinel():
    m = _map([[1, 0], [0, 1]], (1, 2))
    m.counts = np.array([[1, 0]])
    assert localize(m, QuerySet(["a"], np.array([[1.0, 0.0]]))).M_c.tolist() == [0, -1]


def _label_map(grid, labels=("x",), scores=None):
    grid = np.asarray(grid)
    s = np.ones(grid.size) if scores is None else np.asarray(scores, float).ravel()
    return LabelMap(grid.ravel(), s, list(labels), grid.shape)


def test_target_single_cell():
    g = -np.ones((5, 5), dtype=int)
    g[2, 2] = 0
    m = _map(np.zeros((25, 2)), (5, 5))
    t = target_position(m, _label_map(g), "x")
    assert t.position == pytest.approx((0.125, 0.125)) and t.support_cells == 1


def test_target_larger_component_wins():
    g = -np.ones((6, 6), dtype=int)
    g[0, 0] = 0
    g[3, 1:6] = 0
    t = target_position(_map(np.zeros((36, 2)), (6, 6)), _label_map(g), "x")
    assert t.support_cells == 5
    assert t.grid_centroid == pytest.approx((3.0, 3.0))


def test_target_l_shape():
    g = -np.ones((3, 3), dtype=int)
    g[0, 0] = g[0, 1] = g[1, 0] = 0
    t = target_position(_map(np.zeros((9, 2)), (3, 3)), _label_map(g), "x")
    assert t.grid_centroid == pytest.approx((1 / 3, 1 / 3))
    assert t.position == pytest.approx(((1 / 3 + 0.5) * 0.05, (1 / 3 + 0.5) * 0.05))


def test_target_errors():
    g = -np.ones((3, 3), dtype=int)
    g[0, 0] = 0
    m = _map(np.zeros((9, 2)), (3, 3))
    with pytest.raises(LabelNotFound):
        target_position(m, _label_map(g), "missing")
    with pytest.raises(LabelNotFound):
        target_position(m, _label_map(g), "x", min_cluster_size=2)


def test_planted_rectangle_center(rng):
    for _ in range(10):
        r0, c0 = rng.integers(0, 10, 2)
        h, w = rng.integers(1, 8, 2)
        g = -np.ones((20, 20), dtype=int)
        g[r0:r0 + h, c0:c0 + w] = 0
        t = target_position(_map(np.zeros((400, 2)), (20, 20)), _label_map(g), "x")
        cx, cy = (c0 + w / 2) * 0.05, (r0 + h / 2) * 0.05
        assert abs(t.position[0] - cx) <= 0.025 and abs(t.position[1] - cy) <= 0.025


def test_map_save_load_identical(tmp_path):
    scene = generate_scene("foodK", 3)
    cfg = MapConfig()
    emb = OraclePixelEmbedder()
    a = build_map(scene_frames(scene), emb, cfg)
    a.save(tmp_path / "a.lvmp")
    build_map(scene_frames(scene), emb, cfg).save(tmp_path / "b.lvmp")
    assert (tmp_path / "a.lvmp").read_bytes() == (tmp_path / "b.lvmp").read_bytes()
    b = VLMap.load(tmp_path / "a.lvmp")
    np.testing.assert_allclose(b.Q, a.Q, atol=1e-6)
    assert b.grid_shape == a.grid_shape


def test_scene_workspace_localization():
    scene = generate_scene("foodK", 3)
    emb = OraclePixelEmbedder()
    m = build_map(scene_frames(scene), emb, MapConfig())
    desk = scene.workspace_by_name("office room desk")
    qs = QuerySet.with_background(["desk"], emb.text_encoder)
    lm = localize(m, qs)
    t = target_position(m, lm, "desk")
    assert np.hypot(*(np.array(t.position) - np.array(desk.center))) < 0.025 + 1e-9
    pose = navigate(scene, t)
    assert pose.workspace_id == desk.id
    assert (pose.x, pose.y) == tuple(desk.approach)


def test_background_does_not_shadow_query():
    qs = QuerySet.with_background(["the corner", "corner"])
    assert qs.labels.count("corner") == 1 and "the corner" in qs.labels
    assert qs.labels.index("the corner") < len(qs.labels)


def test_navigate_snapping():
    scene = generate_scene("packA", 0)
    ws = scene.workspaces[0]
    from lovmm.vlmap import NavTarget

    ax, ay = ws.approach
    assert navigate(scene, NavTarget((ax, ay), "w", 1)).workspace_id == ws.id
    assert navigate(scene, NavTarget((ax + 0.1, ay), "w", 1)).workspace_id == ws.id
    with pytest.raises(UnreachableTarget):
        navigate(scene, NavTarget((-5.0, -5.0), "w", 1))
