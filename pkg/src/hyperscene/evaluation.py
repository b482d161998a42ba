"""Capacity analysis, end-to-end evaluation, and report emission.

Evaluation runs a question set against freshly encoded memories for
several seeds and buckets every question into exactly one of four
categories by what its program touches: spatial relation functions,
oracle-backed attribute functions, both, or neither. The partition is
exact by construction; the invariant is still rechecked before a report
is returned because downstream accounting leans on it.

Capacity analysis measures pure recall quality: encode annotated scenes
at several dimensions, decode every item back, and tabulate location
MSE, mean IoU, and the fraction of items decoded with IoU above 0.5.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .algebra import derive_seed
from .masks import MaskLibrary
from .oracle import AttributeDictionary, MockOracle
from .programs import (
    NoAnswer,
    ORACLE_FUNCTIONS,
    ProgramParseError,
    RELATION_FUNCTIONS,
    parse_program,
    run_program,
)
from .scene import SSPMemory, build_cleanup_grid, encode_scene, normalize_scene, scene_metrics
from .synthetic import AnnotatedScene, QuestionRecord, SyntheticSceneSpec, generate_scenes

CATEGORIES = ("relation", "attribute", "both", "other")

# Argument slots that carry a relation name, per function.
_RELATION_ARGS = {
    "relate": (1,),
    "relate_inv": (1,),
    "relate_name": (1,),
    "relate_inv_name": (1,),
    "verify_rel": (1,),
    "verify_rel_inv": (1,),
    "choose_rel_inv": (2, 3),
}


def categorize_program(text: str) -> str:
    """Bucket a program by the function families it uses.

    Unparseable programs land in "other"; they execute to a bad_program
    outcome and still need a bucket for the partition to stay exact.
    """
    try:
        program = parse_program(text)
    except ProgramParseError:
        return "other"
    functions = {step.function for step in program.steps}
    has_relation = bool(functions & RELATION_FUNCTIONS)
    has_attribute = bool(functions & ORACLE_FUNCTIONS)
    if has_relation and has_attribute:
        return "both"
    if has_relation:
        return "relation"
    if has_attribute:
        return "attribute"
    return "other"


def relations_in_program(text: str, lib: MaskLibrary | None = None) -> tuple[str, ...]:
    """Distinct relation names a program queries, in first-use order.

    With a library the names are folded to canonical mask relations and
    unknown ones are dropped, which is the form correlation analysis needs.
    """
    try:
        program = parse_program(text)
    except ProgramParseError:
        return ()
    seen: list[str] = []
    for step in program.steps:
        for slot in _RELATION_ARGS.get(step.function, ()):
            if slot >= len(step.args):
                continue
            name = step.args[slot]
            if lib is not None:
                try:
                    name = lib.canonical(name)
                except KeyError:
                    continue
            else:
                name = name.strip().lower()
            if name not in seen:
                seen.append(name)
    return tuple(seen)


@dataclass(frozen=True)
class MemoryConfig:
    """How scenes are encoded during an evaluation run."""

    d: int = 1024
    seed_offset: int = 0

    def encode_seed(self, eval_seed: int) -> int:
        return self.seed_offset + eval_seed


@dataclass(frozen=True)
class CategoryCounts:
    total: int = 0
    correct: int = 0
    wrong: int = 0
    no_answer: int = 0

    def __post_init__(self):
        if self.total != self.correct + self.wrong + self.no_answer:
            raise ValueError(
                f"counts do not partition: {self.correct}+{self.wrong}"
                f"+{self.no_answer} != {self.total}"
            )

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0

    @property
    def no_answer_rate(self) -> float:
        return self.no_answer / self.total if self.total else 0.0

    def merged(self, other: "CategoryCounts") -> "CategoryCounts":
        return CategoryCounts(
            total=self.total + other.total,
            correct=self.correct + other.correct,
            wrong=self.wrong + other.wrong,
            no_answer=self.no_answer + other.no_answer,
        )


@dataclass(frozen=True)
class SeedResult:
    seed: int
    accuracy: float
    categories: Mapping[str, CategoryCounts]
    no_answer_reasons: Mapping[str, int]


@dataclass(frozen=True)
class CapacityRow:
    dim: int
    mse: float
    iou: float
    items_pct: float  # percentage of items decoded with IoU > 0.5
    accuracy: float | None = None


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    p_one_sided: float
    n: int
    degenerate: bool = False


@dataclass(frozen=True)
class EvalReport:
    """Aggregated evaluation outcome.

    Category counts in `categories` are question-seed instances (every
    question is executed once per seed); each SeedResult carries the
    per-seed view whose totals sum to question_total exactly.
    """

    question_total: int
    seed_results: tuple[SeedResult, ...]
    accuracy_mean: float
    accuracy_std: float
    categories: Mapping[str, CategoryCounts]
    no_answer_reasons: Mapping[str, int]
    relation_accuracy: Mapping[str, tuple[int, int]]  # relation -> (correct, total)
    capacity: tuple[CapacityRow, ...] = ()
    correlation: CorrelationResult | None = None
    subset_flagged: bool = False

    @property
    def instance_total(self) -> int:
        return self.question_total * len(self.seed_results)


def _check_partition(question_total: int, categories: Mapping[str, CategoryCounts]) -> None:
    covered = sum(c.total for c in categories.values())
    if covered != question_total:
        raise AssertionError(
            f"category totals {covered} do not partition {question_total} questions"
        )


def subsample_questions(
    questions: Sequence[QuestionRecord], limit: int, seed: int = 0
) -> tuple[tuple[QuestionRecord, ...], bool]:
    """Seeded uniform subset without replacement, order preserved.

    The reference workload caps evaluation at 10,000 questions; how that
    subset was chosen is not documented, so uniform sampling is used and
    the report flags that a subset was taken.
    """
    if limit <= 0:
        raise ValueError("limit must be positive")
    if len(questions) <= limit:
        return tuple(questions), False
    rng = np.random.default_rng(derive_seed(seed, "question-subset", limit))
    picked = np.sort(rng.choice(len(questions), size=limit, replace=False))
    return tuple(questions[i] for i in picked), True


def _resolve_oracle(oracle, scenes: Mapping[str, AnnotatedScene]):
    if oracle == "mock":
        return MockOracle({image_id: s.facts for image_id, s in scenes.items()})
    return oracle


def run_eval(
    dataset,
    config: MemoryConfig,
    lib: MaskLibrary,
    oracle,
    seeds: Sequence[int],
    dictionary: AttributeDictionary | None = None,
    label_merges: Mapping[str, str] | None = None,
    workers: int = 1,
    max_questions: int | None = None,
    subset_seed: int = 0,
) -> EvalReport:
    """Execute every question once per seed and aggregate the outcomes.

    `dataset` needs `.questions` and `.scenes`; `oracle` is either the
    string "mock" (ground truth from the dataset's own facts) or any object
    with the score/health interface. Per-question failures never raise;
    they surface as no-answer outcomes in the report.
    """
    if not dataset.questions:
        raise ValueError("dataset has no questions")
    if not seeds:
        raise ValueError("need at least one seed")
    questions, subset_flagged = (
        subsample_questions(dataset.questions, max_questions, subset_seed)
        if max_questions
        else (tuple(dataset.questions), False)
    )
    scenes = dataset.scenes
    missing = {q.image_id for q in questions} - set(scenes)
    if missing:
        raise ValueError(f"questions reference images without scenes: {sorted(missing)[:5]}")
    oracle = _resolve_oracle(oracle, scenes)

    question_category = [categorize_program(q.program) for q in questions]
    question_relations = [relations_in_program(q.program, lib) for q in questions]

    seed_results: list[SeedResult] = []
    relation_hits: dict[str, list[int]] = {}
    total_reasons: dict[str, int] = {}

    for seed in seeds:
        memories: dict[str, SSPMemory] = {}

        def memory_for(image_id: str) -> SSPMemory:
            mem = memories.get(image_id)
            if mem is None:
                scene = scenes[image_id]
                mem = encode_scene(
                    list(scene.objects), scene.image_w, scene.image_h,
                    d=config.d, seed=config.encode_seed(seed),
                )
                memories[image_id] = mem
            return mem

        # Encode up front so worker threads only read shared state.
        for image_id in {q.image_id for q in questions}:
            memory_for(image_id)

        def run_one(q: QuestionRecord):
            trace = run_program(
                q.program, memories[q.image_id], lib, oracle, q.image_id,
                dictionary=dictionary, label_merges=label_merges,
            )
            if isinstance(trace.outcome, NoAnswer):
                return "no_answer", trace.outcome.reason
            return ("correct", None) if trace.answer.strip().lower() == q.answer else ("wrong", None)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(run_one, questions))
        else:
            outcomes = [run_one(q) for q in questions]

        tallies = {name: {"total": 0, "correct": 0, "wrong": 0, "no_answer": 0}
                   for name in CATEGORIES}
        reasons: dict[str, int] = {}
        correct_count = 0
        for q, category, rels, (kind, reason) in zip(
            questions, question_category, question_relations, outcomes
        ):
            tallies[category]["total"] += 1
            tallies[category][kind] += 1
            if kind == "correct":
                correct_count += 1
            if reason is not None:
                reasons[reason] = reasons.get(reason, 0) + 1
                total_reasons[reason] = total_reasons.get(reason, 0) + 1
            for rel in rels:
                hit = relation_hits.setdefault(rel, [0, 0])
                hit[0] += int(kind == "correct")
                hit[1] += 1

        categories = {name: CategoryCounts(**vals) for name, vals in tallies.items()}
        _check_partition(len(questions), categories)
        seed_results.append(
            SeedResult(
                seed=seed,
                accuracy=correct_count / len(questions),
                categories=categories,
                no_answer_reasons=reasons,
            )
        )

    aggregate = {name: CategoryCounts() for name in CATEGORIES}
    for result in seed_results:
        for name in CATEGORIES:
            aggregate[name] = aggregate[name].merged(result.categories[name])
    accuracies = np.array([r.accuracy for r in seed_results])

    report = EvalReport(
        question_total=len(questions),
        seed_results=tuple(seed_results),
        accuracy_mean=float(accuracies.mean()),
        accuracy_std=float(accuracies.std()),
        categories=aggregate,
        no_answer_reasons=dict(sorted(total_reasons.items())),
        relation_accuracy={
            rel: (hit[0], hit[1]) for rel, hit in sorted(relation_hits.items())
        },
        subset_flagged=subset_flagged,
    )
    _check_partition(report.instance_total, report.categories)
    return report


def gqa_load_scenes(
    scene_count: int = 200,
    mean_objects: int = 17,
    seed: int = 0,
    spread: int = 5,
    jitter: float = 0.5,
) -> list[AnnotatedScene]:
    """Synthetic scenes whose object load matches the reference workload.

    Counts cycle through mean +/- spread so the average lands on
    `mean_objects` without every scene being identical. Boxes are then
    jittered off the encoding grid by up to `jitter` location units per
    coordinate: real annotations are continuous, and the off-grid
    mismatch is what keeps cleanup from being trivially exact, so decode
    quality would be overstated without it.
    """
    if scene_count < 1:
        raise ValueError("scene_count must be positive")
    steps = sorted(range(-spread, spread + 1), key=abs)
    counts = [max(1, mean_objects + steps[i % len(steps)]) for i in range(scene_count)]
    scenes: list[AnnotatedScene] = []
    for index, count in enumerate(counts):
        spec = SyntheticSceneSpec(
            object_count=count,
            seed=derive_seed(seed, "capacity-scene", index),
            scene_count=1,
            min_size=1,
            max_size=3,
            max_overlap=0.5,
        )
        scene = generate_scenes(spec)[0]
        if jitter > 0.0:
            scene = _jitter_scene(scene, jitter, derive_seed(seed, "capacity-jitter", index))
        scenes.append(replace(scene, image_id=f"capacity-{index:04d}"))
    return scenes


def _jitter_scene(scene: AnnotatedScene, jitter: float, seed: int) -> AnnotatedScene:
    """Push every box off the integer grid by up to `jitter` location units."""
    from .oracle import ObjectFacts, SceneFacts
    from .scene import SceneObject
    from .synthetic import annotate_relations

    rng = np.random.default_rng(seed)
    px = jitter * scene.image_w / 100.0  # one location unit in pixels
    objects = []
    for obj in scene.objects:
        w = float(np.clip(obj.w + rng.uniform(-px, px), 6.0, scene.image_w))
        h = float(np.clip(obj.h + rng.uniform(-px, px), 6.0, scene.image_h))
        x = float(np.clip(obj.x + rng.uniform(-px, px), 0.0, scene.image_w - w))
        y = float(np.clip(obj.y + rng.uniform(-px, px), 0.0, scene.image_h - h))
        objects.append(SceneObject(label=obj.label, x=x, y=y, w=w, h=h, object_id=obj.object_id))
    objects = tuple(objects)
    facts = SceneFacts(
        image_w=scene.image_w,
        image_h=scene.image_h,
        objects=tuple(
            ObjectFacts(name=o.label, bbox=(o.x, o.y, o.w, o.h), attributes=old.attributes)
            for o, old in zip(objects, scene.facts.objects)
        ),
        scene_attributes=dict(scene.facts.scene_attributes),
    )
    return replace(
        scene,
        objects=objects,
        relations=annotate_relations(list(objects), scene.image_w, scene.image_h),
        facts=facts,
    )


def capacity_analysis(
    dims: Sequence[int],
    scenes: Sequence[AnnotatedScene],
    seeds: Sequence[int],
    questions=None,
    lib: MaskLibrary | None = None,
    oracle=None,
    dictionary: AttributeDictionary | None = None,
) -> tuple[CapacityRow, ...]:
    """Decode-quality table over dimensions, averaged across seeds.

    Metrics are weighted by object count so large scenes count for what
    they hold. When a question suite is supplied (with a mask library and
    an oracle), the same questions are run at every dimension and the
    accuracy column is filled in; otherwise it stays None.
    """
    if not dims or not scenes or not seeds:
        raise ValueError("need at least one dim, scene, and seed")
    rows: list[CapacityRow] = []
    for dim in dims:
        per_seed = []
        for seed in seeds:
            sq_sum = iou_sum = items_sum = 0.0
            weight = 0
            for scene in scenes:
                memory = encode_scene(
                    list(scene.objects), scene.image_w, scene.image_h, d=dim, seed=seed
                )
                truth = normalize_scene(scene.image_w, scene.image_h, list(scene.objects))
                mse, iou, items = scene_metrics(memory, truth)
                n = len(scene.objects)
                sq_sum += mse * n
                iou_sum += iou * n
                items_sum += items * n
                weight += n
            per_seed.append((sq_sum / weight, iou_sum / weight, items_sum / weight))
        mse, iou, items = (float(np.mean([s[i] for s in per_seed])) for i in range(3))
        accuracy = None
        if questions is not None and getattr(questions, "questions", ()):
            if lib is None or oracle is None:
                raise ValueError("accuracy column needs a mask library and an oracle")
            report = run_eval(
                questions, MemoryConfig(d=dim), lib, oracle, seeds, dictionary=dictionary
            )
            accuracy = report.accuracy_mean
        rows.append(CapacityRow(dim=dim, mse=mse, iou=iou, items_pct=items * 100.0, accuracy=accuracy))
    return tuple(rows)


def pearson_one_sided(xs: Sequence[float], ys: Sequence[float]) -> CorrelationResult:
    """Pearson r with a one-sided p for the negative-direction hypothesis.

    p is P(T <= t) under the null, so r = -1 gives p = 0 and r = +1 gives
    p = 1. Zero variance in either series makes r undefined; the result is
    flagged instead of raising so callers can report it.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("series must be 1-D and equally long")
    n = len(x)
    if n < 3:
        raise ValueError("need at least 3 points")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        return CorrelationResult(r=math.nan, p_one_sided=math.nan, n=n, degenerate=True)
    r = float(np.corrcoef(x, y)[0, 1])
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        t = math.copysign(math.inf, r)
    else:
        t = r * math.sqrt((n - 2) / (1.0 - r * r))
    p = float(stats.t.cdf(t, df=n - 2))
    return CorrelationResult(r=r, p_one_sided=p, n=n)


def mask_size_correlation(report: EvalReport, lib: MaskLibrary) -> CorrelationResult:
    """Correlate per-relation accuracy with mask size (active cell count)."""
    sizes: list[float] = []
    accuracies: list[float] = []
    for relation, (correct, total) in report.relation_accuracy.items():
        mask = lib.masks.get(relation)
        if mask is None or total == 0:
            continue
        sizes.append(float(mask.grid.sum()))
        accuracies.append(correct / total)
    if len(sizes) < 3:
        raise ValueError(f"need at least 3 exercised relations, have {len(sizes)}")
    return pearson_one_sided(sizes, accuracies)


def similarity_map(memory: SSPMemory, label: str, instance: str | None = None) -> np.ndarray:
    """Location-similarity heatmap for one object, rows indexed by y.

    Unbinds the instance pointer from the 2D location memory and evaluates
    similarity on the full location grid in the frequency domain.
    """
    entries = memory.vocabulary.get(label)
    if not entries:
        raise KeyError(f"label {label!r} not in vocabulary")
    entry = entries[0]
    if instance is not None:
        matches = [e for e in entries if e.instance == instance]
        if not matches:
            raise KeyError(f"instance {instance!r} not found for label {label!r}")
        entry = matches[0]
    grid = build_cleanup_grid(memory.axes)
    fq = np.fft.fft(memory.loc2d) * np.conj(np.fft.fft(entry.sp))
    partial = fq[None, :] * np.conj(grid.x_powers)  # (x-points, d)
    sim = (partial @ np.conj(grid.y_powers).T).real / memory.d  # [x, y]
    return sim.T.copy()


def write_pgm(values: np.ndarray, path: str | Path, maxval: int = 255) -> None:
    """Write a 2-D array as an ASCII PGM; plain text stays diffable.

    Boolean arrays map to {0, maxval}; float arrays are min-max scaled.
    """
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise ValueError(f"PGM needs a 2-D array, got shape {arr.shape}")
    if arr.dtype == bool:
        scaled = arr.astype(np.int64) * maxval
    else:
        arr = arr.astype(float)
        span = float(arr.max() - arr.min())
        scaled = (
            np.zeros(arr.shape, dtype=np.int64)
            if span == 0.0
            else np.round((arr - arr.min()) / span * maxval).astype(np.int64)
        )
    lines = [f"P2", f"{arr.shape[1]} {arr.shape[0]}", str(maxval)]
    lines.extend(" ".join(str(v) for v in row) for row in scaled)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_mask_pgms(lib: MaskLibrary, directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, mask in sorted(lib.masks.items()):
        slug = "".join(c if c.isalnum() else "-" for c in name).strip("-") or "mask"
        path = directory / f"mask-{slug}.pgm"
        write_pgm(mask.grid, path)
        written.append(path)
    return written


def report_to_dict(report: EvalReport) -> dict:
    def counts(c: CategoryCounts) -> dict:
        return {
            "total": c.total,
            "correct": c.correct,
            "wrong": c.wrong,
            "no_answer": c.no_answer,
            "accuracy": c.accuracy,
            "no_answer_rate": c.no_answer_rate,
        }

    out = {
        "question_total": report.question_total,
        "instance_total": report.instance_total,
        "accuracy_mean": report.accuracy_mean,
        "accuracy_std": report.accuracy_std,
        "subset_flagged": report.subset_flagged,
        "categories": {name: counts(c) for name, c in report.categories.items()},
        "no_answer_reasons": dict(report.no_answer_reasons),
        "relation_accuracy": {
            rel: {"correct": c, "total": t, "accuracy": c / t if t else 0.0}
            for rel, (c, t) in report.relation_accuracy.items()
        },
        "seeds": [
            {
                "seed": r.seed,
                "accuracy": r.accuracy,
                "categories": {name: counts(c) for name, c in r.categories.items()},
                "no_answer_reasons": dict(r.no_answer_reasons),
            }
            for r in report.seed_results
        ],
        "capacity": [
            {
                "dim": row.dim,
                "mse": row.mse,
                "iou": row.iou,
                "items_pct": row.items_pct,
                "accuracy": row.accuracy,
            }
            for row in report.capacity
        ],
    }
    if report.correlation is not None:
        corr = report.correlation
        out["mask_size_correlation"] = {
            "r": corr.r,
            "p_one_sided": corr.p_one_sided,
            "n": corr.n,
            "degenerate": corr.degenerate,
        }
    return out


def _csv_rows(report: EvalReport) -> list[list]:
    rows: list[list] = [["section", "name", "seed", "metric", "value"]]
    rows.append(["overall", "accuracy", "mean", "accuracy", report.accuracy_mean])
    rows.append(["overall", "accuracy", "std", "accuracy", report.accuracy_std])
    for result in report.seed_results:
        rows.append(["overall", "accuracy", result.seed, "accuracy", result.accuracy])
        for name in CATEGORIES:
            c = result.categories[name]
            for metric in ("total", "correct", "wrong", "no_answer"):
                rows.append(["category", name, result.seed, metric, getattr(c, metric)])
    for name, c in report.categories.items():
        for metric in ("total", "correct", "wrong", "no_answer"):
            rows.append(["category", name, "all", metric, getattr(c, metric)])
    for reason, count in report.no_answer_reasons.items():
        rows.append(["no_answer_reason", reason, "all", "count", count])
    for rel, (correct, total) in report.relation_accuracy.items():
        rows.append(["relation", rel, "all", "correct", correct])
        rows.append(["relation", rel, "all", "total", total])
    for row in report.capacity:
        rows.append(["capacity", row.dim, "all", "mse", row.mse])
        rows.append(["capacity", row.dim, "all", "iou", row.iou])
        rows.append(["capacity", row.dim, "all", "items_pct", row.items_pct])
        if row.accuracy is not None:
            rows.append(["capacity", row.dim, "all", "accuracy", row.accuracy])
    if report.correlation is not None:
        rows.append(["correlation", "mask_size", "all", "r", report.correlation.r])
        rows.append(["correlation", "mask_size", "all", "p_one_sided", report.correlation.p_one_sided])
        rows.append(["correlation", "mask_size", "all", "degenerate", report.correlation.degenerate])
    return rows


def save_report(report: EvalReport, json_path: str | Path, csv_path: str | Path | None = None) -> None:
    """Emit the report as JSON plus a long-format CSV next to it."""
    json_path = Path(json_path)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    json_path.write_text(json.dumps(report_to_dict(report), indent=2) + "\n", encoding="utf-8")
    csv_path = Path(csv_path) if csv_path else json_path.with_suffix(".csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        csv.writer(handle).writerows(_csv_rows(report))


def write_capacity_csv(rows: Iterable[CapacityRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["dim", "mse", "iou", "items_pct", "accuracy"])
        for row in rows:
            writer.writerow([
                row.dim,
                f"{row.mse:.4f}",
                f"{row.iou:.4f}",
                f"{row.items_pct:.2f}",
                "" if row.accuracy is None else f"{row.accuracy:.4f}",
            ])
