"""Evaluation harness: categorization, aggregation, capacity, correlation."""

import json
import math

import numpy as np
import pytest

from hyperscene.evaluation import (
    CapacityRow,
    CategoryCounts,
    CorrelationResult,
    EvalReport,
    MemoryConfig,
    SeedResult,
    capacity_analysis,
    categorize_program,
    gqa_load_scenes,
    mask_size_correlation,
    pearson_one_sided,
    relations_in_program,
    report_to_dict,
    run_eval,
    save_report,
    similarity_map,
    subsample_questions,
    write_mask_pgms,
    write_pgm,
)
from hyperscene.scene import encode_scene, normalize_scene, select
from hyperscene.synthetic import (
    SHELF_PROGRAM,
    QuestionRecord,
    QuestionSuite,
    SyntheticSceneSpec,
    shelf_scene,
    generate_question_suite,
    generate_scenes,
)

# ---------------------------------------------------------------- categories


@pytest.mark.parametrize(
    ("program", "category"),
    [
        ("select(cup); relate_inv(#0, on); query_n(#1)", "relation"),
        ("select(cup); query(#0, colour)", "attribute"),
        (SHELF_PROGRAM, "both"),
        ("select(cup); exist(#0)", "other"),
        ("select(cup); query_h(#0)", "other"),
        ("select(cup); verify_rel(#0, on, table)", "relation"),
        ("select(cup); choose_rel_inv(#0, table, to the left of, to the right of)", "relation"),
        ("select(cup); filter(#0, red); exist(#1)", "attribute"),
        ("not even a program((", "other"),
    ],
)
def test_categorize_program(program, category):
    assert categorize_program(program) == category


def test_relations_in_program_plain():
    text = "select(a); relate(#0, near); relate_inv(#1, NEAR); verify_rel(#2, on, b)"
    assert relations_in_program(text) == ("near", "on")


def test_relations_in_program_canonical(mask_library):
    text = "select(a); relate_inv(#0, on top of); choose_rel(#0, b, left of, right of)"
    rels = relations_in_program(text, mask_library)
    assert rels[0] == mask_library.canonical("on")
    assert len(rels) == 3


def test_relations_in_program_unknown_dropped(mask_library):
    text = "select(a); relate(#0, sideways of)"
    assert relations_in_program(text, mask_library) == ()
    assert relations_in_program("ガタガタ((", mask_library) == ()


# ---------------------------------------------------------------- subsample


def _dummy_questions(n):
    return tuple(
        QuestionRecord(
            question_id=f"q{i}", image_id="img", question="?",
            program="select(cup)", answer="yes",
        )
        for i in range(n)
    )


def test_subsample_under_limit_is_identity():
    questions = _dummy_questions(5)
    subset, flagged = subsample_questions(questions, 10)
    assert subset == questions
    assert flagged is False


def test_subsample_over_limit_flagged_and_deterministic():
    questions = _dummy_questions(50)
    a, flagged = subsample_questions(questions, 20, seed=3)
    b, _ = subsample_questions(questions, 20, seed=3)
    c, _ = subsample_questions(questions, 20, seed=4)
    assert flagged is True
    assert len(a) == 20
    assert a == b
    assert a != c
    # order is preserved
    ids = [int(q.question_id[1:]) for q in a]
    assert ids == sorted(ids)


def test_subsample_bad_limit():
    with pytest.raises(ValueError):
        subsample_questions(_dummy_questions(3), 0)


# ---------------------------------------------------------------- run_eval


def test_category_counts_must_partition():
    with pytest.raises(ValueError):
        CategoryCounts(total=3, correct=1, wrong=1, no_answer=0)


@pytest.fixture(scope="module")
def small_suite(mask_library):
    return generate_question_suite(mask_library, count=24, seed=41)


@pytest.fixture(scope="module")
def small_report(mask_library, small_suite):
    return run_eval(small_suite, MemoryConfig(d=1024), mask_library, "mock", seeds=[0, 1])


def test_all_correct_suite_accuracy_one_std_zero(small_report):
    assert small_report.accuracy_mean == 1.0
    assert small_report.accuracy_std == 0.0
    assert len(small_report.seed_results) == 2


def test_partition_exact_per_seed_and_aggregate(small_report):
    for result in small_report.seed_results:
        assert sum(c.total for c in result.categories.values()) == small_report.question_total
        for counts in result.categories.values():
            assert counts.total == counts.correct + counts.wrong + counts.no_answer
    assert sum(c.total for c in small_report.categories.values()) == small_report.instance_total


def test_single_seed_has_zero_std(mask_library, small_suite):
    report = run_eval(small_suite, MemoryConfig(d=1024), mask_library, "mock", seeds=[7])
    assert report.accuracy_std == 0.0
    assert report.instance_total == report.question_total


def test_question_order_permutation_invariant(mask_library, small_suite, small_report):
    reordered = QuestionSuite(
        questions=tuple(reversed(small_suite.questions)), scenes=small_suite.scenes
    )
    report = run_eval(reordered, MemoryConfig(d=1024), mask_library, "mock", seeds=[0, 1])
    assert report.accuracy_mean == small_report.accuracy_mean
    for name, counts in report.categories.items():
        assert counts == small_report.categories[name]


def test_workers_do_not_change_results(mask_library, small_suite, small_report):
    report = run_eval(
        small_suite, MemoryConfig(d=1024), mask_library, "mock", seeds=[0, 1], workers=4
    )
    assert report.accuracy_mean == small_report.accuracy_mean
    assert report.categories == small_report.categories


def test_no_answer_reasons_recorded(mask_library, small_suite):
    bad = QuestionRecord(
        question_id="q-bad", image_id=small_suite.questions[0].image_id,
        question="?", program="select(cup); relate_inv(#0, sideways of); query_n(#1)",
        answer="nothing",
    )
    patched = QuestionSuite(
        questions=small_suite.questions + (bad,), scenes=small_suite.scenes
    )
    report = run_eval(patched, MemoryConfig(d=1024), mask_library, "mock", seeds=[0])
    assert report.no_answer_reasons.get("unknown_relation") == 1
    assert sum(c.total for c in report.categories.values()) == report.question_total
    assert sum(c.no_answer for c in report.categories.values()) == 1


def test_relation_accuracy_tracks_canonical_relations(small_report, mask_library):
    assert small_report.relation_accuracy
    for rel, (correct, total) in small_report.relation_accuracy.items():
        assert rel in mask_library.masks
        assert 0 <= correct <= total


def test_max_questions_subsets_and_flags(mask_library, small_suite):
    report = run_eval(
        small_suite, MemoryConfig(d=1024), mask_library, "mock",
        seeds=[0], max_questions=10,
    )
    assert report.question_total == 10
    assert report.subset_flagged is True


def test_run_eval_rejects_empty_and_orphans(mask_library, small_suite):
    empty = QuestionSuite(questions=(), scenes={})
    with pytest.raises(ValueError):
        run_eval(empty, MemoryConfig(), mask_library, "mock", seeds=[0])
    orphan = QuestionSuite(questions=_dummy_questions(1), scenes={})
    with pytest.raises(ValueError):
        run_eval(orphan, MemoryConfig(), mask_library, "mock", seeds=[0])
    with pytest.raises(ValueError):
        run_eval(small_suite, MemoryConfig(), mask_library, "mock", seeds=[])


# ---------------------------------------------------------------- capacity


def test_gqa_load_scenes_shape_and_determinism():
    scenes = gqa_load_scenes(scene_count=12, mean_objects=10, spread=2, seed=4)
    again = gqa_load_scenes(scene_count=12, mean_objects=10, spread=2, seed=4)
    assert len(scenes) == 12
    counts = [len(s.objects) for s in scenes]
    assert min(counts) >= 8 and max(counts) <= 12
    assert abs(sum(counts) / len(counts) - 10) <= 1
    assert [tuple((o.x, o.y) for o in s.objects) for s in scenes] == [
        tuple((o.x, o.y) for o in s.objects) for s in again
    ]


def test_gqa_load_scenes_jitter_moves_boxes_off_grid():
    jittered = gqa_load_scenes(scene_count=2, mean_objects=5, seed=1)[0]
    on_grid = gqa_load_scenes(scene_count=2, mean_objects=5, seed=1, jitter=0.0)[0]
    poses = normalize_scene(jittered.image_w, jittered.image_h, list(jittered.objects))
    assert any(abs(p.x - round(p.x)) > 1e-6 for _, p in poses)
    grid_poses = normalize_scene(on_grid.image_w, on_grid.image_h, list(on_grid.objects))
    assert all(abs(p.x - round(p.x)) < 1e-9 for _, p in grid_poses)


def test_capacity_single_object_scenes_near_perfect():
    spec = SyntheticSceneSpec(object_count=1, seed=9, scene_count=6)
    scenes = generate_scenes(spec)
    rows = capacity_analysis([1024], scenes, seeds=[0])
    row = rows[0]
    assert row.items_pct == 100.0
    assert row.mse <= 0.5
    assert row.accuracy is None
    # exhaustive decode agrees on these scenes
    for scene in scenes[:2]:
        memory = encode_scene(list(scene.objects), scene.image_w, scene.image_h,
                              d=1024, seed=0)
        label = scene.objects[0].label
        assert select(memory, label).pose == select(memory, label, strategy="exhaustive").pose


def test_capacity_trend_over_dimensions():
    scenes = gqa_load_scenes(scene_count=10, seed=2)
    rows = capacity_analysis([512, 1024, 2048], scenes, seeds=[0])
    mses = [r.mse for r in rows]
    ious = [r.iou for r in rows]
    # non-increasing MSE and non-decreasing IoU with 5% slack
    assert mses[1] <= mses[0] * 1.05 and mses[2] <= mses[1] * 1.05
    assert ious[1] >= ious[0] * 0.95 and ious[2] >= ious[1] * 0.95


def test_capacity_accuracy_column(mask_library, small_suite):
    scenes = list(small_suite.scenes.values())[:3]
    rows = capacity_analysis(
        [1024], scenes, seeds=[0],
        questions=QuestionSuite(questions=small_suite.questions[:6],
                                scenes=small_suite.scenes),
        lib=mask_library, oracle="mock",
    )
    assert rows[0].accuracy is not None
    assert 0.0 <= rows[0].accuracy <= 1.0


def test_capacity_accuracy_needs_lib_and_oracle(small_suite):
    scenes = list(small_suite.scenes.values())[:1]
    with pytest.raises(ValueError):
        capacity_analysis([256], scenes, seeds=[0], questions=small_suite)


def test_capacity_rejects_empty_inputs():
    with pytest.raises(ValueError):
        capacity_analysis([], [shelf_scene()], seeds=[0])
    with pytest.raises(ValueError):
        capacity_analysis([256], [], seeds=[0])
    with pytest.raises(ValueError):
        capacity_analysis([256], [shelf_scene()], seeds=[])


# ---------------------------------------------------------------- correlation


def test_pearson_perfect_positive():
    res = pearson_one_sided([1, 2, 3, 4], [10, 20, 30, 40])
    assert res.r == pytest.approx(1.0)
    assert res.p_one_sided == pytest.approx(1.0)
    assert not res.degenerate


def test_pearson_perfect_negative():
    res = pearson_one_sided([1, 2, 3, 4], [4, 3, 2, 1])
    assert res.r == pytest.approx(-1.0)
    assert res.p_one_sided == pytest.approx(0.0)


def test_pearson_degenerate_variance_flagged():
    res = pearson_one_sided([1, 2, 3], [5, 5, 5])
    assert res.degenerate
    assert math.isnan(res.r) and math.isnan(res.p_one_sided)


def test_pearson_moderate_negative_p_below_half():
    res = pearson_one_sided([1, 2, 3, 4, 5, 6], [4, 5, 2, 3, 1, 2])
    assert -1.0 < res.r < 0.0
    assert 0.0 < res.p_one_sided < 0.5


def test_pearson_input_validation():
    with pytest.raises(ValueError):
        pearson_one_sided([1, 2], [1, 2])
    with pytest.raises(ValueError):
        pearson_one_sided([1, 2, 3], [1, 2])


def test_mask_size_correlation_from_report(mask_library):
    relations = sorted(mask_library.masks)[:4]
    sizes = [int(mask_library.masks[r].grid.sum()) for r in relations]
    # accuracy anti-ordered against mask size -> strongly negative r
    order = np.argsort(sizes)
    accuracy = {}
    for rank, idx in enumerate(order):
        accuracy[relations[idx]] = (len(relations) - rank, len(relations))
    seed = SeedResult(seed=0, accuracy=1.0, categories={}, no_answer_reasons={})
    report = EvalReport(
        question_total=4, seed_results=(seed,), accuracy_mean=1.0, accuracy_std=0.0,
        categories={}, no_answer_reasons={}, relation_accuracy=accuracy,
    )
    res = mask_size_correlation(report, mask_library)
    assert res.r < -0.9
    assert res.p_one_sided < 0.1


def test_mask_size_correlation_needs_three_relations(mask_library):
    seed = SeedResult(seed=0, accuracy=1.0, categories={}, no_answer_reasons={})
    report = EvalReport(
        question_total=1, seed_results=(seed,), accuracy_mean=1.0, accuracy_std=0.0,
        categories={}, no_answer_reasons={},
        relation_accuracy={"on": (1, 1), "near": (1, 1)},
    )
    with pytest.raises(ValueError):
        mask_size_correlation(report, mask_library)


def test_mask_size_correlation_constant_accuracy_degenerate(small_report, mask_library):
    # the all-correct suite pins every relation at accuracy 1.0
    res = mask_size_correlation(small_report, mask_library)
    assert res.degenerate


# ---------------------------------------------------------------- viz / io


def test_similarity_map_peaks_at_true_location():
    scene = shelf_scene()
    memory = encode_scene(list(scene.objects), scene.image_w, scene.image_h,
                          d=512, seed=0)
    heat = similarity_map(memory, "bowl")
    assert heat.shape == (101, 101)
    y, x = np.unravel_index(np.argmax(heat), heat.shape)
    assert (x, y) == (40, 35)
    with pytest.raises(KeyError):
        similarity_map(memory, "zebra")
    with pytest.raises(KeyError):
        similarity_map(memory, "bowl", instance="not-there")


def test_write_pgm_bool_and_float(tmp_path):
    path = tmp_path / "mask.pgm"
    write_pgm(np.array([[True, False], [False, True]]), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "P2"
    assert lines[1] == "2 2"
    assert lines[2] == "255"
    assert lines[3].split() == ["255", "0"]

    flat = tmp_path / "flat.pgm"
    write_pgm(np.full((2, 3), 7.0), flat)
    body = flat.read_text().splitlines()[3:]
    assert all(v == "0" for row in body for v in row.split())

    with pytest.raises(ValueError):
        write_pgm(np.zeros(5), tmp_path / "bad.pgm")


def test_write_mask_pgms(mask_library, tmp_path):
    written = write_mask_pgms(mask_library, tmp_path / "viz")
    assert len(written) == len(mask_library.masks)
    assert all(p.exists() for p in written)


def test_report_serialization_round_trip(small_report, tmp_path):
    blob = report_to_dict(small_report)
    assert blob["question_total"] == small_report.question_total
    assert set(blob["categories"]) == {"relation", "attribute", "both", "other"}
    json_path = tmp_path / "report.json"
    save_report(small_report, json_path)
    loaded = json.loads(json_path.read_text())
    assert loaded["accuracy_mean"] == small_report.accuracy_mean
    csv_path = json_path.with_suffix(".csv")
    rows = csv_path.read_text().splitlines()
    assert rows[0] == "section,name,seed,metric,value"
    assert len(rows) > 10


def test_report_with_capacity_and_correlation_serializes(small_report, tmp_path):
    import dataclasses

    report = dataclasses.replace(
        small_report,
        capacity=(CapacityRow(dim=512, mse=50.0, iou=0.6, items_pct=63.0, accuracy=0.4),),
        correlation=CorrelationResult(r=-0.3, p_one_sided=0.09, n=10),
    )
    blob = report_to_dict(report)
    assert blob["capacity"][0]["dim"] == 512
    assert blob["mask_size_correlation"]["r"] == -0.3
    save_report(report, tmp_path / "full.json")
    text = (tmp_path / "full.csv").read_text()
    assert "capacity" in text and "correlation" in text
