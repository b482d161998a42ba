"""Synthetic annotated scenes, relation samples, and question suites.

Everything here is generator-side plumbing: ground-truth scenes that stand
in for real scene-graph data, relation samples to learn query masks from,
and question suites with known answers for end-to-end evaluation.

The one load-bearing idea is a single geometry source of truth. Subject
placement is parameterized in anchor-frame cells (the mask frame gives the
anchor a 50-cell span), and both the mask-learning samples and the scene
generator draw from the same bands, scaled by the anchor's own size in
whatever units the caller works in. Queries then recover generated objects
exactly: a subject placed in a relation's band lands inside the learned
mask's active region by construction. Question generation additionally
validates every placement against the actual learned mask and retries, so
emitted questions are unambiguous rather than merely probable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .algebra import derive_seed
from .masks import (
    ANCHOR_SPAN,
    MaskLibrary,
    RelationSample,
    learn_mask,
    load_label_class_table,
    load_relation_table,
)
from .oracle import AttributeDictionary, ObjectFacts, SceneFacts, default_dictionary
from .scene import GridPose, SceneObject, XY_EXTENT, WH_EXTENT, normalize_scene

__all__ = [
    "AnnotatedScene",
    "SHELF_PROGRAM",
    "QuestionRecord",
    "QuestionSuite",
    "RELATIONS",
    "SyntheticSceneSpec",
    "annotate_relations",
    "build_mask_library",
    "shelf_scene",
    "generate_question_suite",
    "generate_scenes",
    "relation_samples",
]

IMAGE_SIDE = 1000.0  # synthetic scenes are square; grid unit = 10 px

RELATIONS = (
    "to the right of",
    "to the left of",
    "above",
    "below",
    "on",
    "under",
    "near",
    "in",
    "behind",
    "in front of",
)

# Relations whose ground truth is decidable by the exact box predicates.
PREDICATE_RELATIONS = RELATIONS[:8]

_SIZE_TO_XY = XY_EXTENT / WH_EXTENT

DEFAULT_LABELS = (
    "chair", "table", "shelf", "sofa", "desk", "bench",
    "bowl", "cup", "bottle", "box", "basket",
    "dog", "cat", "bird", "horse",
    "man", "woman", "boy", "girl",
    "car", "lamp", "ball",
)


# --- frame-cell placement bands -------------------------------------------
#
# Corner offsets are relative to the anchor center; the anchor occupies
# [-25, 25] in both axes. The loose bands feed mask learning; the tight
# bands place scene objects well inside the thresholded active region.


def _mirror_x(dx: float, w: float) -> float:
    return -(dx + w)


def _mirror_y(dy: float, h: float) -> float:
    return -(dy + h)


def _sample_cells(relation: str, rng: np.random.Generator) -> tuple[float, float, float, float]:
    """One mask-learning subject in frame cells: (dx, dy, w, h).

    Perpendicular axes are centered (center, not corner, drawn near the
    anchor axis) so that the accumulated box coverage is symmetric; that
    keeps the inverse query direction inside coverage for same-size pairs.
    Supporters drawn for "under" run wide because the things objects rest
    on usually outsize them.
    """
    u = rng.uniform
    if relation == "to the right of":
        w, h = u(15, 55), u(15, 55)
        return u(32, 95), u(-15, 15) - h / 2, w, h
    if relation == "to the left of":
        dx, dy, w, h = _sample_cells("to the right of", rng)
        return _mirror_x(dx, w), dy, w, h
    if relation == "below":
        w, h = u(15, 55), u(15, 55)
        return u(-15, 15) - w / 2, u(32, 95), w, h
    if relation == "above":
        dx, dy, w, h = _sample_cells("below", rng)
        return dx, _mirror_y(dy, h), w, h
    if relation == "on":
        w, h = u(15, 50), u(12, 60)
        bottom = -ANCHOR_SPAN / 2 + u(-6, 2)
        return u(-15, 15) - w / 2, bottom - h, w, h
    if relation == "under":
        w, h = u(30, 130), u(12, 50)
        top = ANCHOR_SPAN / 2 + u(-2, 6)
        return u(-25, 25) - w / 2, top, w, h
    if relation == "near":
        w, h = u(15, 45), u(15, 45)
        gap, t = u(4, 34), u(-20, 20)
        side = int(rng.integers(4))
        if side == 0:
            return ANCHOR_SPAN / 2 + gap, t - h / 2, w, h
        if side == 1:
            return -ANCHOR_SPAN / 2 - gap - w, t - h / 2, w, h
        if side == 2:
            return t - w / 2, -ANCHOR_SPAN / 2 - gap - h, w, h
        return t - w / 2, ANCHOR_SPAN / 2 + gap, w, h
    if relation == "in":
        w, h = u(10, 28), u(10, 28)
        lo = -ANCHOR_SPAN / 2 + 1
        return u(lo, ANCHOR_SPAN / 2 - 1 - w), u(lo, ANCHOR_SPAN / 2 - 1 - h), w, h
    if relation == "behind":
        w, h = u(10, 35), u(10, 35)
        return u(-30, 30) - w / 2, u(-75, -45) - h / 2, w, h
    if relation == "in front of":
        w, h = u(15, 50), u(15, 50)
        return u(-30, 30) - w / 2, u(45, 75) - h / 2, w, h
    raise KeyError(f"no sample geometry for relation {relation!r}")


def _scene_cells(
    relation: str, w: float, h: float, rng: np.random.Generator
) -> tuple[float, float]:
    """Corner offset in frame cells for a scene subject of known cell size."""
    u = rng.uniform
    if relation == "to the right of":
        return u(42, 85), u(-8, 8) - h / 2
    if relation == "to the left of":
        return _mirror_x(u(42, 85), w), u(-8, 8) - h / 2
    if relation == "below":
        return u(-8, 8) - w / 2, u(42, 85)
    if relation == "above":
        return u(-8, 8) - w / 2, _mirror_y(u(42, 85), h)
    if relation == "on":
        return u(-8, 8) - w / 2, -ANCHOR_SPAN / 2 - h
    if relation == "under":
        return u(-8, 8) - w / 2, ANCHOR_SPAN / 2
    if relation == "near":
        gap, t = u(8, 16), u(-10, 10)
        side = int(rng.integers(4))
        if side == 0:
            return ANCHOR_SPAN / 2 + gap, t - h / 2
        if side == 1:
            return -ANCHOR_SPAN / 2 - gap - w, t - h / 2
        if side == 2:
            return t - w / 2, -ANCHOR_SPAN / 2 - gap - h
        return t - w / 2, ANCHOR_SPAN / 2 + gap
    if relation == "in":
        return u(-20, 20 - w), u(-20, 20 - h)
    if relation == "behind":
        return u(-20, 20) - w / 2, u(-70, -50) - h / 2
    if relation == "in front of":
        return u(-20, 20) - w / 2, u(50, 70) - h / 2
    raise KeyError(f"no scene geometry for relation {relation!r}")


def relation_samples(relation: str, count: int = 1200, seed: int = 11) -> list[RelationSample]:
    """Generate relation samples in pixel space for mask learning."""
    rng = np.random.default_rng(derive_seed(seed, "relation-samples", relation))
    samples = []
    for _ in range(count):
        aw, ah = rng.uniform(40, 120, size=2)
        ax, ay = rng.uniform(100, 400, size=2)
        dx, dy, w, h = _sample_cells(relation, rng)
        sx, sy = aw / ANCHOR_SPAN, ah / ANCHOR_SPAN
        samples.append(
            RelationSample(
                anchor_box=(ax, ay, aw, ah),
                relative_box=(
                    ax + aw / 2 + dx * sx,
                    ay + ah / 2 + dy * sy,
                    w * sx,
                    h * sy,
                ),
                relation=relation,
            )
        )
    return samples


def _packaged(name: str) -> Path:
    handle = resources.files("hyperscene.data").joinpath(name)
    with resources.as_file(handle) as path:
        return Path(path)


def build_mask_library(
    relations: Sequence[str] = RELATIONS,
    sample_count: int = 1200,
    threshold: float = 0.05,
    seed: int = 11,
) -> MaskLibrary:
    """Learn a mask per relation and wire up the packaged string tables."""
    masks = {
        rel: learn_mask(rel, relation_samples(rel, sample_count, seed), threshold=threshold)
        for rel in relations
    }
    synonyms = load_relation_table(_packaged("synonyms.csv"))
    inverses = load_relation_table(_packaged("inverse.csv"))
    classes = load_label_class_table(_packaged("hypernyms.csv"))
    return MaskLibrary(
        masks=masks,
        synonym_map={k: v for k, v in synonyms.items() if v in masks},
        inverse_map={k: v for k, v in inverses.items() if k in masks and v in masks},
        label_classes=classes,
    )


# --- exact relation predicates ---------------------------------------------


def _edges(pose: GridPose) -> tuple[float, float, float, float]:
    return pose.x, pose.y, pose.x + pose.w * _SIZE_TO_XY, pose.y + pose.h * _SIZE_TO_XY


def _overlap(lo_a: float, hi_a: float, lo_b: float, hi_b: float) -> float:
    return max(0.0, min(hi_a, hi_b) - max(lo_a, lo_b))


def _gap(a: GridPose, b: GridPose) -> float:
    ax0, ay0, ax1, ay1 = _edges(a)
    bx0, by0, bx1, by1 = _edges(b)
    dx = max(bx0 - ax1, ax0 - bx1, 0.0)
    dy = max(by0 - ay1, ay0 - by1, 0.0)
    return float(np.hypot(dx, dy))


ON_TOLERANCE = 2.0  # grid units between touching edges
NEAR_DISTANCE = 12.0


def _v_overlap(a: GridPose, b: GridPose) -> float:
    return _overlap(_edges(a)[1], _edges(a)[3], _edges(b)[1], _edges(b)[3])


def _h_overlap(a: GridPose, b: GridPose) -> float:
    return _overlap(_edges(a)[0], _edges(a)[2], _edges(b)[0], _edges(b)[2])


def _right_of(a: GridPose, b: GridPose) -> bool:
    return a.center[0] > b.center[0] and _v_overlap(a, b) > 0


def _left_of(a: GridPose, b: GridPose) -> bool:
    return a.center[0] < b.center[0] and _v_overlap(a, b) > 0


def _above(a: GridPose, b: GridPose) -> bool:
    return a.center[1] < b.center[1] and _h_overlap(a, b) > 0


def _below(a: GridPose, b: GridPose) -> bool:
    return a.center[1] > b.center[1] and _h_overlap(a, b) > 0


def _on(a: GridPose, b: GridPose) -> bool:
    half = min(a.w, b.w) * _SIZE_TO_XY / 2
    return _h_overlap(a, b) >= half and abs(_edges(a)[3] - _edges(b)[1]) <= ON_TOLERANCE


def _under(a: GridPose, b: GridPose) -> bool:
    return _on(b, a)


def _near(a: GridPose, b: GridPose) -> bool:
    return 0.0 < _gap(a, b) <= NEAR_DISTANCE


def _inside(a: GridPose, b: GridPose) -> bool:
    ax0, ay0, ax1, ay1 = _edges(a)
    bx0, by0, bx1, by1 = _edges(b)
    smaller = (ax1 - ax0) * (ay1 - ay0) < (bx1 - bx0) * (by1 - by0)
    return smaller and ax0 >= bx0 and ay0 >= by0 and ax1 <= bx1 and ay1 <= by1


RELATION_PREDICATES = {
    "to the right of": _right_of,
    "to the left of": _left_of,
    "above": _above,
    "below": _below,
    "on": _on,
    "under": _under,
    "near": _near,
    "in": _inside,
}


def annotate_relations(
    objects: Sequence[SceneObject], image_w: float, image_h: float
) -> tuple[tuple[int, str, int], ...]:
    """All (subject_index, relation, object_index) triples the predicates admit."""
    poses = [pose for _, pose in normalize_scene(image_w, image_h, list(objects))]
    triples = []
    for i, a in enumerate(poses):
        for j, b in enumerate(poses):
            if i == j:
                continue
            for relation, predicate in RELATION_PREDICATES.items():
                if predicate(a, b):
                    triples.append((i, relation, j))
    return tuple(triples)


# --- annotated scenes -------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSceneSpec:
    """Recipe for random annotated scenes."""

    object_count: int
    seed: int
    scene_count: int = 1
    min_size: int = 1  # grid size units (tenths of the location extent)
    max_size: int = 4
    labels: tuple[str, ...] = DEFAULT_LABELS
    max_overlap: float = 0.4  # pairwise IoU ceiling during placement

    def __post_init__(self):
        if self.object_count < 1:
            raise ValueError("object_count must be at least 1")
        if not (1 <= self.min_size <= self.max_size <= 10):
            raise ValueError("sizes must satisfy 1 <= min <= max <= 10")
        if self.scene_count < 1:
            raise ValueError("scene_count must be at least 1")


@dataclass(frozen=True)
class AnnotatedScene:
    """Ground truth for one synthetic image."""

    image_id: str
    image_w: float
    image_h: float
    objects: tuple[SceneObject, ...]
    relations: tuple[tuple[int, str, int], ...]
    facts: SceneFacts


def _box_iou(a: tuple, b: tuple) -> float:
    ix = _overlap(a[0], a[0] + a[2], b[0], b[0] + b[2])
    iy = _overlap(a[1], a[1] + a[3], b[1], b[1] + b[3])
    inter = ix * iy
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union if union > 0 else 0.0


_ATTRIBUTE_TYPES = ("colour", "material", "shape", "size", "pattern")


def _assign_attributes(
    rng: np.random.Generator, dictionary: AttributeDictionary, per_object: int = 2
) -> tuple[str, ...]:
    types = rng.choice(len(_ATTRIBUTE_TYPES), size=per_object, replace=False)
    values = []
    for t in types:
        candidates = dictionary.candidates(_ATTRIBUTE_TYPES[int(t)])
        values.append(candidates[int(rng.integers(len(candidates)))])
    return tuple(values)


def generate_scenes(spec: SyntheticSceneSpec) -> list[AnnotatedScene]:
    """Random non-degenerate scenes, deterministic under the spec seed."""
    dictionary = default_dictionary()
    scenes = []
    for index in range(spec.scene_count):
        rng = np.random.default_rng(derive_seed(spec.seed, "synthetic-scene", index))
        boxes: list[tuple] = []
        objects = []
        for k in range(spec.object_count):
            for attempt in range(200):
                w = int(rng.integers(spec.min_size, spec.max_size + 1))
                h = int(rng.integers(spec.min_size, spec.max_size + 1))
                x = int(rng.integers(0, int(XY_EXTENT) - w * 10 + 1))
                y = int(rng.integers(0, int(XY_EXTENT) - h * 10 + 1))
                box = (x * 10.0, y * 10.0, w * 100.0, h * 100.0)
                if all(_box_iou(box, other) <= spec.max_overlap for other in boxes):
                    break
            else:
                raise ValueError(
                    f"could not place {spec.object_count} boxes under the overlap ceiling"
                )
            boxes.append(box)
            label = spec.labels[int(rng.integers(len(spec.labels)))]
            objects.append(
                SceneObject(label, box[0], box[1], box[2], box[3], object_id=f"{label}-{k}")
            )
        facts = SceneFacts(
            image_w=IMAGE_SIDE,
            image_h=IMAGE_SIDE,
            objects=tuple(
                ObjectFacts(
                    name=o.label,
                    bbox=(o.x, o.y, o.w, o.h),
                    attributes=_assign_attributes(rng, dictionary),
                )
                for o in objects
            ),
            scene_attributes={
                "weather": dictionary.candidates("weather")[int(rng.integers(4))],
                "place": dictionary.candidates("place")[int(rng.integers(4))],
            },
        )
        scenes.append(
            AnnotatedScene(
                image_id=f"synthetic-{spec.seed}-{index}",
                image_w=IMAGE_SIDE,
                image_h=IMAGE_SIDE,
                objects=tuple(objects),
                relations=annotate_relations(objects, IMAGE_SIDE, IMAGE_SIDE),
                facts=facts,
            )
        )
    return scenes


# --- question suite ---------------------------------------------------------


@dataclass(frozen=True)
class QuestionRecord:
    question_id: str
    image_id: str
    question: str
    program: str
    answer: str


@dataclass(frozen=True)
class QuestionSuite:
    questions: tuple[QuestionRecord, ...]
    scenes: Mapping[str, AnnotatedScene]

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            for q in self.questions:
                record = {
                    "question_id": q.question_id,
                    "image_id": q.image_id,
                    "question": q.question,
                    "program": q.program,
                    "answer": q.answer,
                }
                handle.write(json.dumps(record) + "\n")


@dataclass(frozen=True)
class _Obj:
    """One object row while a question's scene is under construction."""

    label: str
    x: int
    y: int
    w: int
    h: int
    attributes: tuple[str, ...] = ()

    @property
    def pose(self) -> GridPose:
        return GridPose(float(self.x), float(self.y), float(self.w), float(self.h))


SHELF_PROGRAM = "select(shelf); filter(#0, metal); relate_inv(#1, on); query_name(#2)"


class _SuiteBuilder:
    """Draws validated question scenes; every emitted answer is provable."""

    def __init__(self, lib: MaskLibrary, seed: int, dictionary: AttributeDictionary):
        self.lib = lib
        self.rng = np.random.default_rng(derive_seed(seed, "question-suite"))
        self.dictionary = dictionary
        self.questions: list[QuestionRecord] = []
        self.scenes: dict[str, AnnotatedScene] = {}

    # -- geometry helpers --

    def offsets(self, relation: str, anchor: GridPose, inverse: bool) -> set[tuple[int, int]]:
        mask = self.lib.resolve(relation, inverse=inverse)
        fx = anchor.w * _SIZE_TO_XY / ANCHOR_SPAN
        fy = anchor.h * _SIZE_TO_XY / ANCHOR_SPAN
        dys, dxs = mask.grid_offsets(fx, fy)
        return set(zip(dys.tolist(), dxs.tolist()))

    def in_region(
        self, relation: str, anchor: GridPose, target: GridPose, inverse: bool,
        margin: int = 0,
    ) -> bool:
        """Target corner (and its margin neighborhood) inside the region.

        A one-cell margin keeps placements robust to single-unit decode
        error at query time.
        """
        offs = self.offsets(relation, anchor, inverse)
        acx, acy = anchor.center
        ky = int(round(target.y - acy))
        kx = int(round(target.x - acx))
        return all(
            (ky + dy, kx + dx) in offs
            for dy in range(-margin, margin + 1)
            for dx in range(-margin, margin + 1)
        )

    def outside_region(
        self, relation: str, anchor: GridPose, target: GridPose, inverse: bool,
        margin: int = 0,
    ) -> bool:
        """Target corner (and its margin neighborhood) clear of the region."""
        offs = self.offsets(relation, anchor, inverse)
        acx, acy = anchor.center
        ky = int(round(target.y - acy))
        kx = int(round(target.x - acx))
        return not any(
            (ky + dy, kx + dx) in offs
            for dy in range(-margin, margin + 1)
            for dx in range(-margin, margin + 1)
        )

    def place_related(
        self, relation: str, anchor: _Obj, size: tuple[int, int] = (2, 2)
    ) -> _Obj | None:
        """A subject in the relation's band at this anchor, or None."""
        w, h = size
        fx = anchor.w * _SIZE_TO_XY / ANCHOR_SPAN
        fy = anchor.h * _SIZE_TO_XY / ANCHOR_SPAN
        acx, acy = anchor.pose.center
        for _ in range(60):
            dx, dy = _scene_cells(relation, w * _SIZE_TO_XY / fx, h * _SIZE_TO_XY / fy, self.rng)
            x = int(round(acx + dx * fx))
            y = int(round(acy + dy * fy))
            if not (0 <= x <= XY_EXTENT - w * 10 and 0 <= y <= XY_EXTENT - h * 10):
                continue
            subject = _Obj("pending", x, y, w, h)
            if self.in_region(relation, anchor.pose, subject.pose, inverse=False, margin=1):
                return subject
        return None

    def anchor_for(self, relation: str, size: tuple[int, int] = (3, 3)) -> _Obj:
        """An anchor whose relation band stays inside the image."""
        w, h = size
        windows = {
            "to the right of": ((4, 14), (30, 62)),
            "to the left of": ((56, 70), (30, 62)),
            "below": ((30, 62), (4, 14)),
            "above": ((30, 62), (56, 70)),
            "on": ((24, 64), (20, 70)),
            "under": ((24, 64), (14, 50)),
            "near": ((30, 40), (30, 40)),
            "in": ((24, 54), (24, 54)),
        }
        (x0, x1), (y0, y1) = windows[relation]
        x = int(self.rng.integers(x0, x1 + 1))
        y = int(self.rng.integers(y0, y1 + 1))
        return _Obj("pending", x, y, w, h)

    def far_spots(self, count: int, exclude: Iterable[tuple[str, GridPose, bool]]) -> list[tuple[int, int]]:
        """Grid spots for 2x2 distractors outside every excluded region."""
        spots = [(4, 4), (76, 4), (4, 76), (76, 76), (40, 2), (2, 40), (78, 40), (40, 78)]
        exclusions = list(exclude)
        picked = []
        for x, y in spots:
            pose = GridPose(float(x), float(y), 2.0, 2.0)
            if not all(
                self.outside_region(rel, anchor, pose, inv, margin=2)
                for rel, anchor, inv in exclusions
            ):
                continue
            picked.append((x, y))
            if len(picked) == count:
                break
        return picked

    # -- attribute helpers --

    def value_of(self, attr_type: str) -> str:
        candidates = self.dictionary.candidates(attr_type)
        return candidates[int(self.rng.integers(len(candidates)))]

    def other_value(self, attr_type: str, taken: str) -> str:
        candidates = [v for v in self.dictionary.candidates(attr_type) if v != taken]
        return candidates[int(self.rng.integers(len(candidates)))]

    def pick(self, pool: Sequence[str], *, exclude: Iterable[str] = ()) -> str:
        options = [p for p in pool if p not in set(exclude)]
        return options[int(self.rng.integers(len(options)))]

    # -- emission --

    def emit(
        self,
        objects: Sequence[_Obj],
        program: str,
        answer: str,
        question: str,
        scene_attrs: Mapping[str, str] | None = None,
    ) -> None:
        index = len(self.questions)
        image_id = f"suite-{index:04d}"
        self.scenes[image_id] = _scene_from_objs(image_id, objects, scene_attrs)
        self.questions.append(
            QuestionRecord(
                question_id=f"q-{index:04d}",
                image_id=image_id,
                question=question,
                program=program,
                answer=answer,
            )
        )

    def relation_scene(
        self,
        relation: str,
        anchor_label: str,
        subject_label: str,
        distractor_labels: Sequence[str],
        anchor_size: tuple[int, int] = (3, 3),
    ) -> tuple[_Obj, _Obj, list[_Obj]]:
        """Anchor + one subject in band + distractors provably outside it."""
        for _ in range(80):
            anchor = self.anchor_for(relation, anchor_size)
            subject = self.place_related(relation, anchor)
            if subject is None:
                continue
            regions = [
                (relation, anchor.pose, False),
                (relation, anchor.pose, True),
            ]
            spots = self.far_spots(len(distractor_labels), regions)
            if len(spots) < len(distractor_labels):
                continue
            anchor = _Obj(anchor_label, anchor.x, anchor.y, anchor.w, anchor.h, self._rand_attrs())
            subject = _Obj(
                subject_label, subject.x, subject.y, subject.w, subject.h, self._rand_attrs()
            )
            distractors = [
                _Obj(label, x, y, 2, 2, self._rand_attrs())
                for label, (x, y) in zip(distractor_labels, spots)
            ]
            return anchor, subject, distractors
        raise RuntimeError(f"could not stage a {relation!r} scene inside the mask band")

    def _rand_attrs(self) -> tuple[str, str]:
        return (self.value_of("colour"), self.value_of("material"))

    def _fillers(self, count: int, used: Iterable[str]) -> list[_Obj]:
        spots = self.far_spots(count, ())
        labels = [l for l in DEFAULT_LABELS if l not in set(used)]
        picked = self.rng.choice(len(labels), size=count, replace=False)
        return [
            _Obj(labels[int(i)], x, y, 2, 2, self._rand_attrs())
            for i, (x, y) in zip(picked, spots)
        ]

    def place_half(self, label: str, axis: str, half: str) -> _Obj:
        """A 2x2 object whose center is well inside one half of the image."""
        if axis == "v":
            y = int(self.rng.integers(4, 31)) if half == "top" else int(self.rng.integers(60, 77))
            x = int(self.rng.integers(4, 77))
        else:
            x = int(self.rng.integers(4, 31)) if half == "left" else int(self.rng.integers(60, 77))
            y = int(self.rng.integers(4, 77))
        return _Obj(label, x, y, 2, 2, self._rand_attrs())

    def half_of(self, obj: _Obj, axis: str) -> str:
        cx, cy = obj.pose.center
        if axis == "v":
            return "top" if cy < XY_EXTENT / 2 else "bottom"
        return "left" if cx < XY_EXTENT / 2 else "right"

    # -- question templates; each emits exactly one validated question --

    def t_exist_yes(self) -> None:
        label = self.pick(DEFAULT_LABELS)
        objs = [self.place_half(label, "v", self.pick(("top", "bottom")))]
        objs += self._fillers(2, [label])
        self.emit(objs, f"select({label}); exist(#0)", "yes",
                  f"Is there a {label} in the image?")

    def t_exist_no(self) -> None:
        objs = self._fillers(3, [])
        self.emit(objs, "select(zebra); exist(#0)", "no",
                  "Is there a zebra in the image?")

    def t_query_v(self) -> None:
        label = self.pick(DEFAULT_LABELS)
        half = self.pick(("top", "bottom"))
        objs = [self.place_half(label, "v", half)] + self._fillers(2, [label])
        self.emit(objs, f"select({label}); query_v(#0)", half,
                  f"Is the {label} in the top or the bottom of the photo?")

    def t_query_h(self) -> None:
        label = self.pick(DEFAULT_LABELS)
        half = self.pick(("left", "right"))
        objs = [self.place_half(label, "h", half)] + self._fillers(2, [label])
        self.emit(objs, f"select({label}); query_h(#0)", half,
                  f"Is the {label} on the left or the right?")

    def t_filter_v_exist(self) -> None:
        label = self.pick(DEFAULT_LABELS)
        half = self.pick(("top", "bottom"))
        objs = [self.place_half(label, "v", half)] + self._fillers(2, [label])
        self.emit(objs, f"select({label}); filter_v(#0, {half}); exist(#1)", "yes",
                  f"Is there a {label} in the {half} part of the picture?")

    def t_filter_h_exist(self) -> None:
        label = self.pick(DEFAULT_LABELS)
        half = self.pick(("left", "right"))
        objs = [self.place_half(label, "h", half)] + self._fillers(2, [label])
        self.emit(objs, f"select({label}); filter_h(#0, {half}); exist(#1)", "yes",
                  f"Is there a {label} on the {half} side?")

    def t_filter_query_h(self) -> None:
        label = self.pick(DEFAULT_LABELS)
        colour = self.value_of("colour")
        half = self.pick(("left", "right"))
        primary = self.place_half(label, "h", half)
        primary = replace(primary, attributes=(colour, self.value_of("material")))
        objs = [primary] + self._fillers(2, [label])
        self.emit(objs, f"select({label}); filter(#0, {colour}); query_h(#1)", half,
                  f"Which side is the {colour} {label} on?")

    def t_filter_not_query_v(self) -> None:
        label = self.pick(DEFAULT_LABELS)
        colour = self.value_of("colour")
        wrong = self.other_value("colour", colour)
        half = self.pick(("top", "bottom"))
        primary = self.place_half(label, "v", half)
        primary = replace(primary, attributes=(colour, self.value_of("material")))
        objs = [primary] + self._fillers(2, [label])
        self.emit(objs, f"select({label}); filter_not(#0, {wrong}); query_v(#1)", half,
                  f"The {label} that is not {wrong}, is it in the top or the bottom?")

    def t_verify_yes(self) -> None:
        label = self.pick(DEFAULT_LABELS)
        material = self.value_of("material")
        primary = self.place_half(label, "v", self.pick(("top", "bottom")))
        primary = replace(primary, attributes=(material, self.value_of("colour")))
        objs = [primary] + self._fillers(2, [label])
        self.emit(objs, f"select({label}); verify(#0, {material})", "yes",
                  f"Is the {label} made of {material}?")

    def t_verify_no(self) -> None:
        label = self.pick(DEFAULT_LABELS)
        colour = self.value_of("colour")
        wrong = self.other_value("colour", colour)
        primary = self.place_half(label, "h", self.pick(("left", "right")))
        primary = replace(primary, attributes=(colour,))
        objs = [primary] + self._fillers(2, [label])
        self.emit(objs, f"select({label}); verify(#0, {wrong})", "no",
                  f"Is the {label} {wrong}?")

    def t_verify_f_yes(self) -> None:
        weather = self.value_of("weather")
        objs = self._fillers(3, [])
        self.emit(objs, f"verify_f({weather})", "yes",
                  f"Is the weather {weather} here?",
                  scene_attrs={"weather": weather, "place": self.value_of("place")})

    def t_verify_f_no(self) -> None:
        weather = self.value_of("weather")
        wrong = self.other_value("weather", weather)
        objs = self._fillers(3, [])
        self.emit(objs, f"verify_f({wrong})", "no",
                  f"Is it {wrong} in the photo?",
                  scene_attrs={"weather": weather, "place": self.value_of("place")})

    def t_query_attr(self) -> None:
        label = self.pick(DEFAULT_LABELS)
        attr_type = self.pick(("colour", "material"))
        value = self.value_of(attr_type)
        primary = self.place_half(label, "v", self.pick(("top", "bottom")))
        primary = replace(primary, attributes=(value,))
        objs = [primary] + self._fillers(2, [label])
        self.emit(objs, f"select({label}); query(#0, {attr_type})", value,
                  f"What {attr_type} is the {label}?")

    def t_query_f(self) -> None:
        place = self.value_of("place")
        objs = self._fillers(3, [])
        self.emit(objs, "query_f(place)", place,
                  "Which place is this photo taken at?",
                  scene_attrs={"weather": self.value_of("weather"), "place": place})

    def _stacked_pair(self, top_label: str, bottom_label: str, distractor_labels: Sequence[str]):
        """Equal-size pair with the top object resting on the bottom one."""
        for _ in range(80):
            x = int(self.rng.integers(6, 73))
            y = int(self.rng.integers(6, 57))
            jitter = int(self.rng.integers(-1, 2))
            top = _Obj(top_label, x, y, 2, 2, self._rand_attrs())
            bottom = _Obj(bottom_label, x + jitter, y + 20, 2, 2, self._rand_attrs())
            if not self.in_region("on", top.pose, bottom.pose, inverse=True, margin=1):
                continue
            regions = [("on", top.pose, True)]
            spots = self.far_spots(len(distractor_labels), regions)
            if len(spots) < len(distractor_labels):
                continue
            distractors = [
                _Obj(label, sx, sy, 2, 2, self._rand_attrs())
                for label, (sx, sy) in zip(distractor_labels, spots)
            ]
            return top, bottom, distractors
        raise RuntimeError("could not stage a stacked pair inside the support band")

    def t_relate_on(self) -> None:
        top, bottom, distractors = self._stacked_pair("cup", "box", ["lamp", "dog"])
        self.emit([top, bottom] + distractors,
                  "select(cup); relate(#0, on); query_n(#1)", "box",
                  "What is the cup sitting on?")

    def t_verify_rel_yes(self) -> None:
        top, bottom, distractors = self._stacked_pair("bowl", "table", ["cat", "bottle"])
        self.emit([top, bottom] + distractors,
                  "select(bowl); verify_rel(#0, on, table)", "yes",
                  "Is the bowl on the table?")

    def t_verify_rel_no(self) -> None:
        top, bottom, distractors = self._stacked_pair("cup", "desk", ["lamp", "bird"])
        self.emit([top, bottom] + distractors,
                  "select(cup); verify_rel(#0, on, lamp)", "no",
                  "Is the cup standing on the lamp?")

    def t_relate_name_on(self) -> None:
        colour = self.value_of("colour")
        for _ in range(80):
            table = self.anchor_for("on")
            cup = self.place_related("on", table)
            if cup is None:
                continue
            if not self.in_region("on", cup.pose, table.pose, inverse=True, margin=1):
                continue
            regions = [("on", cup.pose, True), ("on", table.pose, False)]
            spots = self.far_spots(2, regions)
            if len(spots) < 2:
                continue
            cup = _Obj("cup", cup.x, cup.y, cup.w, cup.h, (self.value_of("material"),))
            table = _Obj("table", table.x, table.y, table.w, table.h, (colour,))
            distractors = [
                _Obj(label, x, y, 2, 2, self._rand_attrs())
                for label, (x, y) in zip(["box", "bird"], spots)
            ]
            self.emit([cup, table] + distractors,
                      "select(cup); relate_name(#0, on, table); query(#1, colour)", colour,
                      "What colour is the table the cup is on?")
            return
        raise RuntimeError("could not stage the named support scene")

    def t_relate_inv(self) -> None:
        relation, phrase = self.pick_relation()
        anchor_label = self.pick(("table", "shelf", "sofa", "desk"))
        subject_label = self.pick(("car", "ball", "cat", "lamp"), exclude=[anchor_label])
        others = [l for l in ("dog", "cup", "bottle") if l not in (anchor_label, subject_label)]
        anchor, subject, distractors = self.relation_scene(
            relation, anchor_label, subject_label, others[:2]
        )
        self.emit([anchor, subject] + distractors,
                  f"select({anchor_label}); relate_inv(#0, {relation}); query_n(#1)",
                  subject_label,
                  f"What is {phrase} the {anchor_label}?")

    def pick_relation(self) -> tuple[str, str]:
        phrases = {
            "to the right of": "to the right of",
            "to the left of": "to the left of",
            "above": "above",
            "below": "below",
        }
        relation = self.pick(tuple(phrases))
        return relation, phrases[relation]

    def t_relate_inv_near(self) -> None:
        anchor, subject, distractors = self.relation_scene("near", "sofa", "lamp", ["cat"])
        self.emit([anchor, subject] + distractors,
                  "select(sofa); relate_inv(#0, near); query_n(#1)", "lamp",
                  "What is next to the sofa?")

    def t_relate_inv_in(self) -> None:
        anchor, subject, distractors = self.relation_scene(
            "in", "basket", "ball", ["dog"], anchor_size=(4, 4)
        )
        self.emit([anchor, subject] + distractors,
                  "select(basket); relate_inv(#0, in); query_n(#1)", "ball",
                  "What is inside the basket?")

    def t_relate_inv_under(self) -> None:
        anchor, subject, distractors = self.relation_scene("under", "table", "box", ["bird"])
        self.emit([anchor, subject] + distractors,
                  "select(table); relate_inv(#0, under); query_n(#1)", "box",
                  "What is underneath the table?")

    def t_relate_inv_name_class(self) -> None:
        anchor, subject, distractors = self.relation_scene(
            "to the right of", "table", "bed", ["dog", "cup"]
        )
        self.emit([anchor, subject] + distractors,
                  "select(table); relate_inv_name(#0, to the right of, furniture); query_n(#1)",
                  "bed",
                  "What kind of furniture is to the right of the table?")

    def t_verify_rel_inv_yes(self) -> None:
        anchor, subject, distractors = self.relation_scene("above", "table", "ball", ["cat"])
        self.emit([anchor, subject] + distractors,
                  "select(table); verify_rel_inv(#0, above, ball)", "yes",
                  "Is the ball above the table?")

    def t_verify_rel_inv_no(self) -> None:
        anchor, subject, distractors = self.relation_scene("above", "desk", "kite", ["cat"])
        self.emit([anchor, subject] + distractors,
                  "select(desk); verify_rel_inv(#0, above, cat)", "no",
                  "Is the cat above the desk?")

    def t_choose_v(self) -> None:
        label = self.pick(DEFAULT_LABELS)
        half = self.pick(("top", "bottom"))
        objs = [self.place_half(label, "v", half)] + self._fillers(2, [label])
        self.emit(objs, f"select({label}); choose_v(#0, top, bottom)", half,
                  f"Is the {label} in the top or the bottom half?")

    def t_choose_h(self) -> None:
        label = self.pick(DEFAULT_LABELS)
        half = self.pick(("left", "right"))
        objs = [self.place_half(label, "h", half)] + self._fillers(2, [label])
        self.emit(objs, f"select({label}); choose_h(#0, left, right)", half,
                  f"Is the {label} on the left or on the right?")

    def t_choose_f(self) -> None:
        place = self.value_of("place")
        other = self.other_value("place", place)
        first, second = (place, other) if self.rng.integers(2) else (other, place)
        objs = self._fillers(3, [])
        self.emit(objs, f"choose_f({first}, {second})", place,
                  f"Was this picture taken at the {first} or the {second}?",
                  scene_attrs={"weather": self.value_of("weather"), "place": place})

    def t_choose_subj(self) -> None:
        a, b = "man", "woman"
        old_one = a if self.rng.integers(2) else b
        obj_a = self.place_half(a, "h", "left")
        obj_b = self.place_half(b, "h", "right")
        obj_a = replace(obj_a, attributes=("old" if old_one == a else "young",))
        obj_b = replace(obj_b, attributes=("old" if old_one == b else "young",))
        objs = [obj_a, obj_b] + self._fillers(1, [a, b])
        self.emit(objs, f"select({a}); select({b}); choose_subj(#0, #1, old)", old_one,
                  f"Who is old, the {a} or the {b}?")

    def t_choose_attr(self) -> None:
        label = self.pick(DEFAULT_LABELS)
        colour = self.value_of("colour")
        other = self.other_value("colour", colour)
        first, second = (colour, other) if self.rng.integers(2) else (other, colour)
        primary = self.place_half(label, "v", self.pick(("top", "bottom")))
        primary = replace(primary, attributes=(colour,))
        objs = [primary] + self._fillers(2, [label])
        self.emit(objs, f"select({label}); choose_attr(#0, colour, {first}, {second})", colour,
                  f"Is the {label} {first} or {second}?")

    def t_choose_rel_inv(self) -> None:
        side = "left" if self.rng.integers(2) else "right"
        relation = f"to the {side} of"
        opposite = "to the right of" if side == "left" else "to the left of"
        for _ in range(80):
            anchor, subject, distractors = self.relation_scene(relation, "table", "box", ["cat"])
            if not self.outside_region(opposite, anchor.pose, subject.pose, False, margin=1):
                continue
            self.emit([anchor, subject] + distractors,
                      "select(table); choose_rel_inv(#0, box, left, right)", side,
                      "Is the box left or right of the table?")
            return
        raise RuntimeError("could not stage an unambiguous side scene")

    def t_and_yes(self) -> None:
        a = self.pick(DEFAULT_LABELS)
        b = self.pick(DEFAULT_LABELS, exclude=[a])
        objs = [self.place_half(a, "h", "left"), self.place_half(b, "h", "right")]
        self.emit(objs, f"select({a}); exist(#0); select({b}); exist(#2); and(#1, #3)", "yes",
                  f"Do you see both a {a} and a {b}?")

    def t_and_no(self) -> None:
        a = self.pick(DEFAULT_LABELS)
        objs = [self.place_half(a, "h", "left")] + self._fillers(1, [a])
        self.emit(objs, f"select({a}); exist(#0); select(zebra); exist(#2); and(#1, #3)", "no",
                  f"Do you see both a {a} and a zebra?")

    def t_or_yes(self) -> None:
        a = self.pick(DEFAULT_LABELS)
        objs = [self.place_half(a, "v", "top")] + self._fillers(1, [a])
        self.emit(objs, f"select(zebra); exist(#0); select({a}); exist(#2); or(#1, #3)", "yes",
                  f"Is there either a zebra or a {a}?")

    def t_or_no(self) -> None:
        objs = self._fillers(2, [])
        self.emit(objs, "select(zebra); exist(#0); select(dragon); exist(#2); or(#1, #3)", "no",
                  "Is there either a zebra or a dragon here?")

    def t_shelf_demo(self) -> None:
        shelf, bowl = _SHELF_OBJS[0], _SHELF_OBJS[1]
        if not self.in_region("on", shelf.pose, bowl.pose, inverse=False, margin=1):
            raise RuntimeError("reference scene fell outside the learned support band")
        for other in _SHELF_OBJS[2:]:
            if not self.outside_region("on", shelf.pose, other.pose, False, margin=2):
                raise RuntimeError("reference scene distractor intrudes into the support band")
        self.emit(list(_SHELF_OBJS), SHELF_PROGRAM, "bowl",
                  "What is the thing on the metal shelf called?",
                  scene_attrs=_SHELF_ATTRS)


_SHELF_OBJS = (
    _Obj("shelf", 30, 55, 4, 3, ("metal",)),
    _Obj("bowl", 40, 35, 2, 2, ("white",)),
    _Obj("cup", 5, 5, 2, 2, ("blue",)),
    _Obj("lamp", 75, 70, 2, 2, ("glass",)),
)
_SHELF_ATTRS = {"weather": "cloudy", "place": "kitchen"}


def _scene_from_objs(
    image_id: str, objs: Sequence[_Obj], scene_attrs: Mapping[str, str] | None
) -> AnnotatedScene:
    scene_objects = tuple(
        SceneObject(
            o.label, o.x * 10.0, o.y * 10.0, o.w * 100.0, o.h * 100.0,
            object_id=f"{o.label}-{k}",
        )
        for k, o in enumerate(objs)
    )
    facts = SceneFacts(
        image_w=IMAGE_SIDE,
        image_h=IMAGE_SIDE,
        objects=tuple(
            ObjectFacts(name=s.label, bbox=(s.x, s.y, s.w, s.h), attributes=o.attributes)
            for s, o in zip(scene_objects, objs)
        ),
        scene_attributes=dict(scene_attrs) if scene_attrs else {},
    )
    return AnnotatedScene(
        image_id=image_id,
        image_w=IMAGE_SIDE,
        image_h=IMAGE_SIDE,
        objects=scene_objects,
        relations=annotate_relations(scene_objects, IMAGE_SIDE, IMAGE_SIDE),
        facts=facts,
    )


def shelf_scene() -> AnnotatedScene:
    """The worked reference scene: a bowl resting on a metal shelf."""
    return _scene_from_objs("shelf-demo", _SHELF_OBJS, _SHELF_ATTRS)


def generate_question_suite(
    lib: MaskLibrary,
    count: int = 200,
    seed: int = 13,
    dictionary: AttributeDictionary | None = None,
) -> QuestionSuite:
    """A deterministic suite of answerable questions over staged scenes.

    Every template validates its geometry against the actual learned masks
    before emitting, so each question's recorded answer is provable from
    the scene. The reference support scene is emitted first; the remaining
    templates cycle until the requested count is reached.
    """
    builder = _SuiteBuilder(lib, seed, dictionary or default_dictionary())
    builder.t_shelf_demo()
    templates = [
        builder.t_exist_yes,
        builder.t_exist_no,
        builder.t_query_v,
        builder.t_query_h,
        builder.t_filter_v_exist,
        builder.t_filter_h_exist,
        builder.t_filter_query_h,
        builder.t_filter_not_query_v,
        builder.t_verify_yes,
        builder.t_verify_no,
        builder.t_verify_f_yes,
        builder.t_verify_f_no,
        builder.t_query_attr,
        builder.t_query_f,
        builder.t_relate_on,
        builder.t_relate_inv,
        builder.t_relate_inv_near,
        builder.t_relate_inv_in,
        builder.t_relate_inv_under,
        builder.t_relate_name_on,
        builder.t_relate_inv_name_class,
        builder.t_verify_rel_yes,
        builder.t_verify_rel_no,
        builder.t_verify_rel_inv_yes,
        builder.t_verify_rel_inv_no,
        builder.t_choose_v,
        builder.t_choose_h,
        builder.t_choose_f,
        builder.t_choose_subj,
        builder.t_choose_attr,
        builder.t_choose_rel_inv,
        builder.t_and_yes,
        builder.t_and_no,
        builder.t_or_yes,
        builder.t_or_no,
    ]
    index = 0
    while len(builder.questions) < count:
        templates[index % len(templates)]()
        index += 1
    return QuestionSuite(
        questions=tuple(builder.questions[:count]), scenes=dict(builder.scenes)
    )
