"""Attribute scoring behind one interface: a ground-truth mock and an HTTP client.

Attribute questions ("what colour is the chair?") are turned into candidate
sentences and scored against the image. The mock oracle answers from scene
graph annotations and exists so the rest of the pipeline can be tested
deterministically; the HTTP client forwards requests to a model-backed
scoring service speaking the same wire protocol. Both raise
OracleUnavailable on failure, which executors map to a no-answer outcome.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import requests

__all__ = [
    "AttributeDictionary",
    "HttpOracle",
    "MockOracle",
    "ObjectFacts",
    "OracleUnavailable",
    "SceneFacts",
    "ScoreRequest",
    "ScoreResponse",
    "build_sentences",
]

_TYPE_ALIASES = {"color": "colour"}


class OracleUnavailable(RuntimeError):
    """The oracle could not produce scores for this request."""


@dataclass(frozen=True)
class ScoreRequest:
    """One scoring call: an image, an optional object box, and sentences."""

    image_ref: str
    sentences: tuple[str, ...]
    bbox: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        if not self.sentences or any(not s for s in self.sentences):
            raise ValueError("request needs at least one non-empty sentence")
        if self.bbox is not None:
            bbox = tuple(float(v) for v in self.bbox)
            if len(bbox) != 4 or bbox[2] <= 0 or bbox[3] <= 0:
                raise ValueError(f"bbox must be (x, y, w, h) with positive size, got {self.bbox}")
            object.__setattr__(self, "bbox", bbox)


@dataclass(frozen=True)
class ScoreResponse:
    scores: tuple[float, ...]

    def __post_init__(self):
        scores = tuple(float(s) for s in self.scores)
        if not all(np.isfinite(s) for s in scores):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "scores", scores)


@dataclass(frozen=True)
class AttributeType:
    values: tuple[str, ...]
    template: str
    image_template: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if len(self.values) < 2:
            raise ValueError("attribute type needs at least 2 candidate values")
        if "{val}" not in self.template:
            raise ValueError("template must contain {val}")


@dataclass(frozen=True)
class AttributeDictionary:
    """Candidate values and sentence templates per attribute type."""

    types: Mapping[str, AttributeType]

    def __post_init__(self):
        object.__setattr__(self, "types", dict(self.types))
        if not self.types:
            raise ValueError("attribute dictionary is empty")

    @staticmethod
    def normalize_type(attribute_type: str) -> str:
        key = attribute_type.strip().lower()
        return _TYPE_ALIASES.get(key, key)

    def has_type(self, attribute_type: str) -> bool:
        return self.normalize_type(attribute_type) in self.types

    def entry(self, attribute_type: str) -> AttributeType:
        key = self.normalize_type(attribute_type)
        if key not in self.types:
            raise KeyError(f"unknown attribute type {attribute_type!r}")
        return self.types[key]

    def candidates(self, attribute_type: str) -> tuple[str, ...]:
        return self.entry(attribute_type).values

    def find_type(self, value: str) -> str | None:
        """The attribute type a candidate value belongs to, if any."""
        wanted = value.strip().lower()
        for name in sorted(self.types):
            if wanted in self.types[name].values:
                return name
        return None

    @classmethod
    def from_json(cls, path: str | Path) -> "AttributeDictionary":
        with open(path, encoding="utf-8") as handle:
            raw = json.load(handle)
        return cls._from_mapping(raw)

    @classmethod
    def default(cls) -> "AttributeDictionary":
        raw = json.loads(
            resources.files("hyperscene.data").joinpath("attributes.json").read_text("utf-8")
        )
        return cls._from_mapping(raw)

    @classmethod
    def _from_mapping(cls, raw: Mapping) -> "AttributeDictionary":
        types = {}
        for name, spec in raw.items():
            types[name.strip().lower()] = AttributeType(
                values=tuple(v.strip().lower() for v in spec["values"]),
                template=spec["template"],
                image_template=spec.get("image_template"),
            )
        return cls(types=types)


def build_sentences(
    object_label: str,
    attribute_type: str,
    candidates: Sequence[str],
    dictionary: AttributeDictionary | None = None,
) -> list[str]:
    """Render one full sentence per candidate value.

    An empty object label means a whole-image query; those prefer the
    type's image template when one exists.
    """
    dictionary = dictionary if dictionary is not None else default_dictionary()
    entry = dictionary.entry(attribute_type)
    if object_label:
        template = entry.template
        label = object_label
    else:
        template = entry.image_template or entry.template
        label = "image"
    return [template.format(obj=label, val=value) for value in candidates]


_DEFAULT_DICTIONARY: list[AttributeDictionary] = []


def default_dictionary() -> AttributeDictionary:
    if not _DEFAULT_DICTIONARY:
        _DEFAULT_DICTIONARY.append(AttributeDictionary.default())
    return _DEFAULT_DICTIONARY[0]


@dataclass(frozen=True)
class ObjectFacts:
    """Ground-truth annotation of one object, as the mock oracle sees it."""

    name: str
    bbox: tuple[float, float, float, float]
    attributes: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))
        object.__setattr__(
            self, "attributes", tuple(a.strip().lower() for a in self.attributes)
        )
        if self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise ValueError(f"object {self.name!r} has non-positive bbox size")


@dataclass(frozen=True)
class SceneFacts:
    """Everything the mock oracle may consult about one image."""

    image_w: float
    image_h: float
    objects: tuple[ObjectFacts, ...] = ()
    scene_attributes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(
            self,
            "scene_attributes",
            {k.strip().lower(): v.strip().lower() for k, v in self.scene_attributes.items()},
        )


def _pixel_iou(a: Sequence[float], b: Sequence[float]) -> float:
    ix = max(0.0, min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union if union > 0 else 0.0


class MockOracle:
    """Scores sentences from ground-truth annotations. Pure and deterministic.

    A sentence scores 1.0 when any of the target's annotated attribute
    values appears in it as a whole word, else 0.0. With a bbox the target
    is the annotated object with the highest overlap; without one the
    scene-level attributes are consulted instead.
    """

    def __init__(self, scenes: Mapping[str, SceneFacts]):
        self._scenes = dict(scenes)

    def score(self, request: ScoreRequest) -> ScoreResponse:
        scene = self._scenes.get(request.image_ref)
        if scene is None:
            raise OracleUnavailable(f"unknown image {request.image_ref!r}")
        if request.bbox is None:
            values = tuple(scene.scene_attributes.values())
        else:
            target = self._match_object(scene, request.bbox)
            values = target.attributes
        scores = tuple(1.0 if _mentions_any(s, values) else 0.0 for s in request.sentences)
        return ScoreResponse(scores=scores)

    def health(self) -> bool:
        return True

    def _match_object(self, scene: SceneFacts, bbox) -> ObjectFacts:
        best = None
        best_iou = 0.0
        for obj in scene.objects:
            iou = _pixel_iou(bbox, obj.bbox)
            if iou > best_iou:
                best, best_iou = obj, iou
        if best is None:
            raise OracleUnavailable(f"no annotated object overlaps bbox {bbox}")
        return best


def _mentions_any(sentence: str, values: Sequence[str]) -> bool:
    lowered = sentence.lower()
    return any(
        re.search(rf"\b{re.escape(value)}\b", lowered) is not None for value in values
    )


class HttpOracle:
    """Client for a scoring service speaking the shared wire protocol."""

    def __init__(
        self,
        endpoint: str,
        timeout: float = 10.0,
        attempts: int = 2,
        session: requests.Session | None = None,
    ):
        if attempts < 1:
            raise ValueError("attempts must be at least 1")
        self._endpoint = endpoint.rstrip("/")
        self._timeout = timeout
        self._attempts = attempts
        self._session = session if session is not None else requests.Session()

    def score(self, request: ScoreRequest) -> ScoreResponse:
        payload = {
            "image": request.image_ref,
            "bbox": list(request.bbox) if request.bbox is not None else None,
            "sentences": list(request.sentences),
        }
        last_error = "no attempt made"
        for _ in range(self._attempts):
            try:
                response = self._session.post(
                    f"{self._endpoint}/score", json=payload, timeout=self._timeout
                )
            except requests.RequestException as exc:
                last_error = f"transport failure: {exc}"
                continue
            if response.status_code != 200:
                last_error = f"HTTP {response.status_code}"
                continue
            try:
                body = response.json()
                scores = body["scores"]
            except (ValueError, KeyError, TypeError) as exc:
                last_error = f"malformed response: {exc}"
                continue
            if not isinstance(scores, list) or len(scores) != len(request.sentences):
                last_error = f"score list of length {len(scores)} for {len(request.sentences)} sentences"
                continue
            try:
                return ScoreResponse(scores=tuple(float(s) for s in scores))
            except (TypeError, ValueError) as exc:
                last_error = f"malformed scores: {exc}"
                continue
        raise OracleUnavailable(f"scoring service at {self._endpoint} failed: {last_error}")

    def health(self) -> bool:
        try:
            response = self._session.get(f"{self._endpoint}/health", timeout=self._timeout)
        except requests.RequestException:
            return False
        if response.status_code != 200:
            return False
        try:
            return response.json().get("status") == "ok"
        except ValueError:
            return False
