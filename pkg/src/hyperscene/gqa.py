"""Scene-graph and question ingestion.

Scene graphs arrive either as one JSON object mapping image id to scene
body, or as a JSON array of bodies that carry their own ``image_id``. A
body looks like::

    {"width": 640, "height": 480,
     "objects": {"17": {"name": "bowl", "x": 10, "y": 20, "w": 50, "h": 40,
                        "attributes": ["white"],
                        "relations": [{"name": "on", "object": "4"}]}}}

Questions are JSON Lines with keys question_id, image_id, question,
program, answer; the program is either executor text or the JSON array
form, which is re-serialized so records stay plain strings.

At dataset scale a handful of malformed records is normal, so ingestion
skips them and counts what it skipped instead of aborting. File-level
problems (unreadable path, wrong top-level type) still raise.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .masks import RelationSample, normalize_relation
from .oracle import ObjectFacts, SceneFacts
from .scene import SceneObject
from .synthetic import AnnotatedScene, QuestionRecord, QuestionSuite

log = logging.getLogger(__name__)

# Scene-level annotation keys lifted into whole-image attributes.
_SCENE_ATTRIBUTE_KEYS = {"location": "place", "place": "place", "weather": "weather"}


@dataclass(frozen=True)
class Dataset:
    """Joined scenes and questions, plus what ingestion had to drop."""

    scenes: Mapping[str, AnnotatedScene]
    questions: tuple[QuestionRecord, ...]
    skipped_scenes: int = 0
    skipped_questions: int = 0

    def suite(self) -> QuestionSuite:
        return QuestionSuite(questions=self.questions, scenes=dict(self.scenes))


def _require_number(body: Mapping, key: str) -> float:
    value = body[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{key} must be a number, got {value!r}")
    return float(value)


def _parse_object(obj_id: str, body: Mapping) -> tuple[SceneObject, tuple[str, ...]]:
    if not isinstance(body, Mapping):
        raise ValueError(f"object {obj_id!r} is not an object record")
    name = body.get("name")
    if not isinstance(name, str) or not name.strip():
        raise ValueError(f"object {obj_id!r} has no name")
    x = _require_number(body, "x")
    y = _require_number(body, "y")
    w = _require_number(body, "w")
    h = _require_number(body, "h")
    attributes = body.get("attributes", [])
    if not isinstance(attributes, list) or any(not isinstance(a, str) for a in attributes):
        raise ValueError(f"object {obj_id!r} has a malformed attribute list")
    obj = SceneObject(label=name.strip().lower(), x=x, y=y, w=w, h=h, object_id=str(obj_id))
    return obj, tuple(a.strip().lower() for a in attributes)


def _parse_scene(image_id: str, body: Mapping) -> AnnotatedScene:
    if not isinstance(body, Mapping):
        raise ValueError("scene body is not an object")
    image_w = _require_number(body, "width")
    image_h = _require_number(body, "height")
    if image_w <= 0 or image_h <= 0:
        raise ValueError(f"degenerate image size {image_w}x{image_h}")
    raw_objects = body.get("objects")
    if not isinstance(raw_objects, Mapping) or not raw_objects:
        raise ValueError("scene has no objects mapping")

    objects: list[SceneObject] = []
    object_attributes: list[tuple[str, ...]] = []
    index_of: dict[str, int] = {}
    # Degenerate boxes appear in the wild; drop the object, keep the scene.
    for obj_id in sorted(raw_objects, key=str):
        try:
            obj, attributes = _parse_object(str(obj_id), raw_objects[obj_id])
        except (KeyError, TypeError, ValueError) as exc:
            log.debug("image %s: dropping object %r: %s", image_id, obj_id, exc)
            continue
        index_of[str(obj_id)] = len(objects)
        objects.append(obj)
        object_attributes.append(attributes)
    if not objects:
        raise ValueError("no usable objects")

    relations: list[tuple[int, str, int]] = []
    for obj_id in sorted(index_of, key=str):
        raw = raw_objects[obj_id].get("relations", [])
        if not isinstance(raw, list):
            continue
        for entry in raw:
            if not isinstance(entry, Mapping):
                continue
            name = entry.get("name")
            target = str(entry.get("object", ""))
            if not isinstance(name, str) or not name.strip() or target not in index_of:
                continue
            relations.append((index_of[obj_id], name.strip().lower(), index_of[target]))

    scene_attributes = {}
    for key, canonical in _SCENE_ATTRIBUTE_KEYS.items():
        value = body.get(key)
        if isinstance(value, str) and value.strip():
            scene_attributes[canonical] = value.strip().lower()

    facts = SceneFacts(
        image_w=image_w,
        image_h=image_h,
        objects=tuple(
            ObjectFacts(name=o.label, bbox=(o.x, o.y, o.w, o.h), attributes=attrs)
            for o, attrs in zip(objects, object_attributes)
        ),
        scene_attributes=scene_attributes,
    )
    return AnnotatedScene(
        image_id=image_id,
        image_w=image_w,
        image_h=image_h,
        objects=tuple(objects),
        relations=tuple(relations),
        facts=facts,
    )


def load_scene_graphs(path: str | Path) -> tuple[dict[str, AnnotatedScene], int]:
    """Parse a scene-graph file into scenes keyed by image id.

    Returns the scenes and the number of records skipped as malformed.
    """
    with open(path, "r", encoding="utf-8") as handle:
        raw = json.load(handle)
    if isinstance(raw, Mapping):
        items = [(str(k), v) for k, v in raw.items()]
    elif isinstance(raw, list):
        items = [(str(rec.get("image_id", i)) if isinstance(rec, Mapping) else str(i), rec)
                 for i, rec in enumerate(raw)]
    else:
        raise ValueError(f"{path}: top level must be a JSON object or array")

    scenes: dict[str, AnnotatedScene] = {}
    skipped = 0
    for image_id, body in items:
        try:
            scenes[image_id] = _parse_scene(image_id, body)
        except (KeyError, TypeError, ValueError) as exc:
            skipped += 1
            log.warning("skipping scene %r: %s", image_id, exc)
    return scenes, skipped


def _parse_question(record: Mapping) -> QuestionRecord:
    if not isinstance(record, Mapping):
        raise ValueError("question record is not an object")
    question_id = record.get("question_id")
    image_id = record.get("image_id")
    program = record.get("program")
    if question_id is None or image_id is None:
        raise ValueError("question record lacks question_id or image_id")
    if isinstance(program, list):
        program = json.dumps(program)
    if not isinstance(program, str) or not program.strip():
        raise ValueError("question record lacks a program")
    question = record.get("question", "")
    answer = record.get("answer", "")
    if not isinstance(question, str) or not isinstance(answer, str):
        raise ValueError("question and answer must be strings")
    return QuestionRecord(
        question_id=str(question_id),
        image_id=str(image_id),
        question=question,
        program=program,
        answer=answer.strip().lower(),
    )


def load_questions(
    path: str | Path, scenes: Mapping[str, AnnotatedScene] | None = None
) -> tuple[tuple[QuestionRecord, ...], int]:
    """Parse a JSON Lines question file, joining against scenes when given.

    Returns the questions and the number of lines skipped (malformed, or
    referencing an image that is not present).
    """
    questions: list[QuestionRecord] = []
    skipped = 0
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = _parse_question(json.loads(line))
            except (json.JSONDecodeError, ValueError) as exc:
                skipped += 1
                log.warning("%s:%d: skipping question: %s", path, line_no, exc)
                continue
            if scenes is not None and record.image_id not in scenes:
                skipped += 1
                log.warning(
                    "%s:%d: question %s references missing image %s",
                    path, line_no, record.question_id, record.image_id,
                )
                continue
            questions.append(record)
    return tuple(questions), skipped


def ingest_gqa(scene_graph_path: str | Path, programs_path: str | Path) -> Dataset:
    """Join scene graphs with question programs into one dataset."""
    scenes, skipped_scenes = load_scene_graphs(scene_graph_path)
    questions, skipped_questions = load_questions(programs_path, scenes)
    log.info(
        "ingested %d scenes (%d skipped), %d questions (%d skipped)",
        len(scenes), skipped_scenes, len(questions), skipped_questions,
    )
    return Dataset(
        scenes=scenes,
        questions=questions,
        skipped_scenes=skipped_scenes,
        skipped_questions=skipped_questions,
    )


def relation_samples_from_scenes(
    scenes: Iterable[AnnotatedScene],
    synonym_map: Mapping[str, str] | None = None,
) -> dict[str, list[RelationSample]]:
    """Group annotated relation instances by relation name.

    A triple (i, rel, j) reads "object i is rel object j", so the anchor
    frame belongs to j and i's box is the one rasterized into the mask.
    Surface names are folded through the synonym map when one is given,
    which is what makes sparse annotation vocabularies learnable.
    """
    grouped: dict[str, list[RelationSample]] = {}
    synonym_map = synonym_map or {}
    for scene in scenes:
        for subject, relation, anchor in scene.relations:
            key = normalize_relation(relation)
            key = synonym_map.get(key, key)
            s = scene.objects[subject]
            a = scene.objects[anchor]
            grouped.setdefault(key, []).append(
                RelationSample(
                    anchor_box=(a.x, a.y, a.w, a.h),
                    relative_box=(s.x, s.y, s.w, s.h),
                    relation=key,
                )
            )
    return grouped
