"""Tests for scene encoding, cleanup grids, and decoding."""

import numpy as np
import pytest

from hyperscene.algebra import derive_seed
from hyperscene.scene import (
    CleanupGrid,
    GridPose,
    SceneObject,
    build_cleanup_grid,
    decode_entries,
    decode_point,
    encode_scene,
    normalize_scene,
    scene_metrics,
    select,
)


def grid_object(label, x, y, w, h, image=500.0, oid=""):
    """Build a SceneObject whose normalized pose is exactly (x, y, w, h)."""
    s = 100.0 / image
    return SceneObject(label=label, x=x / s, y=y / s, w=w * 10.0 / s, h=h * 10.0 / s, object_id=oid)


def test_normalize_scene_frozen_values():
    # Long side 1000 -> scale 0.1.
    [(label, pose)] = normalize_scene(
        1000, 500, [SceneObject("cat", x=500, y=250, w=100, h=50)]
    )
    assert label == "cat"
    assert (pose.x, pose.y, pose.w, pose.h) == (50.0, 25.0, 1.0, 0.5)
    # 640x480 -> scale 100/640.
    [(_, pose)] = normalize_scene(640, 480, [SceneObject("dog", x=320, y=240, w=64, h=48)])
    assert pose.x == pytest.approx(50.0)
    assert pose.y == pytest.approx(37.5)
    assert pose.w == pytest.approx(1.0)
    assert pose.h == pytest.approx(0.75)


def test_normalize_scene_clamps_overflow():
    # A box wider than the image clamps to the grid maximum.
    [(_, pose)] = normalize_scene(100, 100, [SceneObject("wall", x=0, y=0, w=150, h=100)])
    assert pose.w == 10.0
    assert pose.h == 10.0


def test_normalize_scene_rejects_degenerate_image():
    with pytest.raises(ValueError):
        normalize_scene(0, 100, [SceneObject("cat", 0, 0, 1, 1)])


def test_scene_object_validation():
    with pytest.raises(ValueError):
        SceneObject("", 0, 0, 10, 10)
    with pytest.raises(ValueError):
        SceneObject("cat", 0, 0, 0, 10)
    with pytest.raises(ValueError):
        SceneObject("cat", -1, 0, 10, 10)


def test_grid_pose_validation():
    with pytest.raises(ValueError):
        GridPose(x=101.0, y=0, w=1, h=1)
    with pytest.raises(ValueError):
        GridPose(x=0, y=0, w=11.0, h=1)
    with pytest.raises(ValueError):
        GridPose(x=0, y=float("nan"), w=1, h=1)


def test_encode_scene_deterministic():
    objs = [SceneObject("cat", 10, 20, 50, 60, "o1"), SceneObject("dog", 200, 150, 80, 40, "o2")]
    a = encode_scene(objs, 500, 400, d=256, seed=5)
    b = encode_scene(objs, 500, 400, d=256, seed=5)
    c = encode_scene(objs, 500, 400, d=256, seed=6)
    assert np.array_equal(a.m, b.m)
    assert np.array_equal(a.loc2d, b.loc2d)
    assert not np.allclose(a.m, c.m)


def test_encode_scene_order_independent():
    objs = [
        SceneObject("cat", 10, 20, 50, 60, "o1"),
        SceneObject("dog", 200, 150, 80, 40, "o2"),
        SceneObject("cat", 300, 50, 40, 90, "o3"),
    ]
    a = encode_scene(objs, 500, 400, d=256, seed=1)
    b = encode_scene(list(reversed(objs)), 500, 400, d=256, seed=1)
    assert np.allclose(a.m, b.m, atol=1e-9)
    assert np.allclose(a.loc2d, b.loc2d, atol=1e-9)


def test_encode_scene_rejects_empty():
    with pytest.raises(ValueError):
        encode_scene([], 500, 500, d=128, seed=0)


def test_duplicate_labels_get_own_pointers():
    objs = [SceneObject("cat", 10, 20, 50, 60, "o1"), SceneObject("cat", 300, 50, 40, 90, "o2")]
    mem = encode_scene(objs, 500, 500, d=256, seed=0)
    assert len(mem.vocabulary["cat"]) == 2
    sp1, sp2 = (e.sp for e in mem.vocabulary["cat"])
    assert abs(float(sp1 @ sp2)) < 0.3


def test_cleanup_grid_shapes():
    mem = encode_scene([SceneObject("cat", 10, 10, 20, 20)], 100, 100, d=128, seed=0)
    grid = mem.cleanup_grid()
    assert grid.x_powers.shape == (101, 128)
    assert grid.y_powers.shape == (101, 128)
    assert grid.w_powers.shape == (11, 128)
    assert grid.h_powers.shape == (11, 128)
    assert grid.marginal.shape == (128,)
    assert isinstance(grid, CleanupGrid)
    # Small dimensions screen over the whole spectrum, so the two-stage
    # location stage is exact there.
    assert np.array_equal(grid.screen_bins, np.arange(128))


def test_cleanup_grid_rows_match_fractional_powers():
    from hyperscene.scene import SceneAxes, point_vector

    axes = SceneAxes.from_seed(128, 5)
    grid = build_cleanup_grid(axes)
    p = point_vector(axes, GridPose(13, 77, 4, 9))
    via_grid = np.fft.ifft(grid.x_powers[13] * grid.y_powers[77] * grid.w_powers[4] * grid.h_powers[9]).real
    assert np.allclose(p, via_grid, atol=1e-10)


def test_single_object_exact_decode_both_strategies():
    obj = grid_object("cat", 37, 62, 3, 2, oid="o1")
    mem = encode_scene([obj], 500, 500, d=1024, seed=3)
    for strategy in ("two_stage", "exhaustive"):
        res = select(mem, "cat", strategy=strategy)
        assert res is not None
        assert (res.pose.x, res.pose.y, res.pose.w, res.pose.h) == (37.0, 62.0, 3.0, 2.0)
        assert res.score > 0


def test_off_grid_pose_snaps_to_nearest_point():
    # True pose (50.4, 30.6, 2.3, 1.7) should decode to (50, 31, 2, 2).
    s = 100.0 / 500.0
    obj = SceneObject("cat", 50.4 / s, 30.6 / s, 23.0 / s, 17.0 / s)
    mem = encode_scene([obj], 500, 500, d=1024, seed=7)
    res = select(mem, "cat")
    assert (res.pose.x, res.pose.y) == (50.0, 31.0)
    assert (res.pose.w, res.pose.h) == (2.0, 2.0)


def test_select_absent_label_returns_none():
    mem = encode_scene([SceneObject("cat", 10, 10, 20, 20)], 100, 100, d=128, seed=0)
    assert select(mem, "unicorn") is None


def test_select_duplicate_label_returns_an_encoded_instance():
    objs = [grid_object("cat", 20, 20, 2, 2, oid="a"), grid_object("cat", 70, 60, 3, 3, oid="b")]
    mem = encode_scene(objs, 500, 500, d=1024, seed=2)
    res = select(mem, "cat")
    assert res.instance in ("a", "b")
    truth = {"a": (20.0, 20.0), "b": (70.0, 60.0)}
    assert (res.pose.x, res.pose.y) == truth[res.instance]


def test_zero_vector_decodes_to_origin():
    grid = build_cleanup_grid(encode_scene([SceneObject("x", 1, 1, 2, 2)], 100, 100, d=128, seed=0).axes)
    for strategy in ("two_stage", "exhaustive"):
        res = decode_point(np.zeros(128), grid, strategy=strategy)
        assert (res.pose.x, res.pose.y, res.pose.w, res.pose.h) == (0.0, 0.0, 0.0, 0.0)
        assert res.score == 0.0


def test_decode_point_rejects_bad_input():
    mem = encode_scene([SceneObject("x", 1, 1, 2, 2)], 100, 100, d=128, seed=0)
    grid = mem.cleanup_grid()
    with pytest.raises(ValueError):
        decode_point(np.zeros(64), grid)
    with pytest.raises(ValueError):
        decode_point(np.zeros(128), grid, strategy="greedy")


def test_decode_heatmap_shape_and_peak():
    obj = grid_object("cat", 40, 80, 2, 2)
    mem = encode_scene([obj], 500, 500, d=1024, seed=1)
    entry = mem.vocabulary["cat"][0]
    from hyperscene.algebra import involution, bind

    q = bind(mem.m, involution(entry.sp))
    res = decode_point(q, mem.cleanup_grid(), want_heatmap=True)
    assert res.heatmap.shape == (101, 101)
    assert np.unravel_index(np.argmax(res.heatmap), res.heatmap.shape) == (40, 80)


def test_decode_entries_recovers_all_poses():
    objs = [grid_object("a", 10, 15, 1, 2, oid="a"), grid_object("b", 80, 40, 4, 3, oid="b"),
            grid_object("c", 55, 90, 2, 2, oid="c")]
    mem = encode_scene(objs, 500, 500, d=512, seed=4)
    entries = mem.entries()
    results = decode_entries(mem, entries)
    assert len(results) == len(entries)
    for entry, res in zip(entries, results):
        assert res.pose == entry.pose
        assert res.score > 0.5


def test_decode_entries_matches_exhaustive_on_clean_scene():
    objs = [grid_object("a", 30, 20, 3, 1, oid="a"), grid_object("b", 70, 60, 2, 4, oid="b")]
    mem = encode_scene(objs, 500, 500, d=1024, seed=11)
    from hyperscene.algebra import involution, bind

    grid = mem.cleanup_grid()
    batched = decode_entries(mem, mem.entries())
    for entry, res in zip(mem.entries(), batched):
        q = bind(mem.m, involution(entry.sp))
        single = decode_point(q, grid, strategy="exhaustive")
        assert res.pose == single.pose


def test_two_stage_agrees_with_exhaustive_on_clean_queries():
    rng = np.random.default_rng(99)
    agreements = 0
    for i in range(10):
        pose = (int(rng.integers(0, 101)), int(rng.integers(0, 101)),
                int(rng.integers(1, 11)), int(rng.integers(1, 11)))
        obj = grid_object("item", *pose)
        mem = encode_scene([obj], 500, 500, d=512, seed=int(rng.integers(0, 2**31)))
        a = select(mem, "item", strategy="two_stage")
        b = select(mem, "item", strategy="exhaustive")
        if a.pose == b.pose:
            agreements += 1
    assert agreements >= 9


def test_scene_metrics_perfect_recall_on_grid():
    objs = [grid_object("a", 10, 15, 2, 2, oid="a"), grid_object("b", 80, 40, 4, 3, oid="b")]
    mem = encode_scene(objs, 500, 500, d=1024, seed=0)
    truth = [(label, e.pose) for label, entries in mem.vocabulary.items() for e in entries]
    mse, iou, items = scene_metrics(mem, truth)
    assert mse == 0.0
    assert iou == pytest.approx(1.0)
    assert items == 1.0


def test_scene_metrics_off_grid_bounded_error():
    s = 100.0 / 500.0
    objs = [SceneObject("a", 10.3 / s, 15.7 / s, 24.0 / s, 26.0 / s, "a")]
    mem = encode_scene(objs, 500, 500, d=1024, seed=0)
    truth = [("a", mem.vocabulary["a"][0].pose)]
    mse, iou, items = scene_metrics(mem, truth)
    assert mse <= 0.25 + 1e-9
    assert 0.5 < iou <= 1.0
    assert items == 1.0


def test_scene_metrics_errors():
    mem = encode_scene([SceneObject("a", 1, 1, 2, 2)], 100, 100, d=128, seed=0)
    with pytest.raises(ValueError):
        scene_metrics(mem, [])
    with pytest.raises(ValueError):
        scene_metrics(mem, [("ghost", GridPose(0, 0, 1, 1))])


def test_memory_scale_round_trip():
    mem = encode_scene([SceneObject("a", 100, 50, 30, 20)], 640, 480, d=128, seed=0)
    assert mem.scale == pytest.approx(100.0 / 640.0)
    pose = mem.vocabulary["a"][0].pose
    assert pose.x / mem.scale == pytest.approx(100.0)
    assert pose.w * 10.0 / mem.scale == pytest.approx(30.0)


def test_on_grid_points_decode_exactly_at_512():
    rng = np.random.default_rng(derive_seed(0, "selfcheck"))
    ok = 0
    for _ in range(25):
        pose = (int(rng.integers(0, 101)), int(rng.integers(0, 101)),
                int(rng.integers(1, 11)), int(rng.integers(1, 11)))
        mem = encode_scene([grid_object("obj", *pose)], 500, 500, d=512, seed=11)
        res = select(mem, "obj")
        ok += (res.pose.x, res.pose.y, res.pose.w, res.pose.h) == tuple(map(float, pose))
    assert ok == 25
