"""Parse and execute compositional question programs over a scene memory.

A program is a short chain of function calls such as

    select(shelf); filter(#0, metal); relate_inv(#1, on); query_name(#2)

where `#k` references the value produced by step k. Steps resolve objects
from the scene memory, test spatial relations through the mask library,
and consult the attribute oracle for visual properties. Execution either
terminates in an answer string or in a no-answer signal carrying the
reason, mirroring how failed lookups and failed filters abort a question
rather than guessing.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .masks import MaskLibrary, Proposal
from .masks import relate as region_relate
from .masks import relate_name as region_relate_name
from .oracle import (
    AttributeDictionary,
    OracleUnavailable,
    ScoreRequest,
    build_sentences,
    default_dictionary,
)
from .scene import SSPMemory, GridPose, WH_EXTENT, XY_EXTENT
from .scene import select as scene_select

__all__ = [
    "Answer",
    "ExecutionTrace",
    "NoAnswer",
    "NoResult",
    "ORACLE_FUNCTIONS",
    "Position",
    "Program",
    "ProgramParseError",
    "ProgramStep",
    "RELATION_FUNCTIONS",
    "Truth",
    "execute",
    "parse_program",
    "run_program",
]

# Arity of every implemented function, keyed by canonical name.
_ARITY = {
    "select": 1,
    "relate": 2,
    "relate_inv": 2,
    "relate_name": 3,
    "relate_inv_name": 3,
    "filter_v": 2,
    "filter_h": 2,
    "filter": 2,
    "filter_not": 2,
    "verify_f": 1,
    "verify": 2,
    "verify_rel": 3,
    "verify_rel_inv": 3,
    "choose_v": 3,
    "choose_h": 3,
    "choose_f": 2,
    "choose_subj": 3,
    "choose_attr": 4,
    "choose_rel_inv": 4,
    "query_n": 1,
    "query_v": 1,
    "query_h": 1,
    "query_f": 1,
    "query": 2,
    "exist": 1,
    "and": 2,
    "or": 2,
}

_ALIASES = {"query_name": "query_n", "choose_rel": "choose_rel_inv"}

# Recognized but deliberately unimplemented: these need nested scene
# comparisons that the flat memory query model does not express.
_UNSUPPORTED = frozenset({"common", "different", "same"})

# Functions whose Truth(false) aborts the question instead of flowing on.
_GATES = frozenset(
    {
        "filter_v",
        "filter_h",
        "filter",
        "filter_not",
        "verify",
        "verify_f",
        "verify_rel",
        "verify_rel_inv",
    }
)

# Groupings used by evaluation reports to bucket questions.
RELATION_FUNCTIONS = frozenset(
    {
        "relate",
        "relate_inv",
        "relate_name",
        "relate_inv_name",
        "verify_rel",
        "verify_rel_inv",
        "choose_rel_inv",
    }
)
ORACLE_FUNCTIONS = frozenset(
    {
        "filter",
        "filter_not",
        "verify",
        "verify_f",
        "choose_f",
        "choose_subj",
        "choose_attr",
        "query",
        "query_f",
    }
)

NO_ANSWER_REASONS = frozenset(
    {
        "select_failed",
        "filter_terminated",
        "unsupported_function",
        "bad_program",
        "oracle_unavailable",
        "unknown_relation",
    }
)

_HALF = XY_EXTENT / 2.0
_SIZE_TO_XY = XY_EXTENT / WH_EXTENT


class ProgramParseError(ValueError):
    """The program text could not be turned into a step chain."""


@dataclass(frozen=True)
class ProgramStep:
    function: str
    args: tuple[str, ...]
    step_index: int
    recognized: bool = True


@dataclass(frozen=True)
class Program:
    steps: tuple[ProgramStep, ...]

    def functions(self) -> tuple[str, ...]:
        return tuple(step.function for step in self.steps)


# Step values. The union itself is the tag; each step produces exactly one.


@dataclass(frozen=True)
class Position:
    """A located object, as produced by select."""

    label: str
    instance: str
    pose: GridPose
    score: float


@dataclass(frozen=True)
class Truth:
    """A boolean step result carrying the object it was tested on.

    Later steps that reference a filter or verify step expect the object
    that passed the test, so the subject rides along.
    """

    value: bool
    subject: "Position | Proposal | None" = None


@dataclass(frozen=True)
class Answer:
    text: str


@dataclass(frozen=True)
class NoResult:
    """A lookup that found nothing; exist() turns this into a plain no."""


@dataclass(frozen=True)
class NoAnswer:
    reason: str

    def __post_init__(self):
        if self.reason not in NO_ANSWER_REASONS:
            raise ValueError(f"unknown no-answer reason {self.reason!r}")


StepValue = Position | Proposal | Truth | Answer | NoResult


@dataclass(frozen=True)
class ExecutionTrace:
    values: tuple[StepValue, ...]
    outcome: Answer | NoAnswer

    @property
    def answer(self) -> str | None:
        return self.outcome.text if isinstance(self.outcome, Answer) else None

    @property
    def no_answer_reason(self) -> str | None:
        return self.outcome.reason if isinstance(self.outcome, NoAnswer) else None


_CALL_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)$")
_REF_RE = re.compile(r"^#(\d+)$")


def _canonical_name(raw: str) -> tuple[str, bool]:
    name = raw.strip().lower()
    name = _ALIASES.get(name, name)
    return name, name in _ARITY or name in _UNSUPPORTED


def _make_step(name: str, args: Sequence[str], index: int) -> ProgramStep:
    canonical, recognized = _canonical_name(name)
    cleaned = []
    for arg in args:
        token = str(arg).strip().lower()
        if not token:
            raise ProgramParseError(f"step {index}: empty argument")
        ref = _REF_RE.match(token)
        if ref and int(ref.group(1)) >= index:
            raise ProgramParseError(
                f"step {index}: reference {token} does not point to an earlier step"
            )
        cleaned.append(token)
    return ProgramStep(canonical, tuple(cleaned), index, recognized)


def parse_program(text: str) -> Program:
    """Parse the call-chain or JSON array form into a Program.

    Accepts one call per line or semicolon-separated calls, or a JSON
    array of {"function": ..., "args": [...]} objects. References must
    point strictly backwards.
    """
    if not isinstance(text, str) or not text.strip():
        raise ProgramParseError("empty program")
    stripped = text.strip()
    if stripped.startswith("["):
        return _parse_json_form(stripped)
    steps = []
    for piece in re.split(r"[;\n]", stripped):
        piece = piece.strip()
        if not piece:
            continue
        match = _CALL_RE.match(piece)
        if match is None:
            raise ProgramParseError(f"malformed step {piece!r}")
        name, inner = match.groups()
        args = [a.strip() for a in inner.split(",")] if inner.strip() else []
        steps.append(_make_step(name, args, len(steps)))
    if not steps:
        raise ProgramParseError("empty program")
    return Program(steps=tuple(steps))


def _parse_json_form(text: str) -> Program:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProgramParseError(f"invalid JSON program: {exc}") from None
    if not isinstance(raw, list) or not raw:
        raise ProgramParseError("JSON program must be a non-empty array of steps")
    steps = []
    for index, item in enumerate(raw):
        if not isinstance(item, dict) or "function" not in item:
            raise ProgramParseError(f"step {index}: expected an object with a function field")
        args = item.get("args", [])
        if not isinstance(args, list) or any(not isinstance(a, str) for a in args):
            raise ProgramParseError(f"step {index}: args must be a list of strings")
        steps.append(_make_step(str(item["function"]), args, index))
    return Program(steps=tuple(steps))


class _Abort(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class _Run:
    """Mutable state for one program execution."""

    memory: SSPMemory
    lib: MaskLibrary
    oracle: object
    image_ref: str
    dictionary: AttributeDictionary
    label_merges: Mapping[str, str]
    values: list = field(default_factory=list)

    # --- value plumbing ---

    def value_of(self, token: str) -> StepValue:
        ref = _REF_RE.match(token)
        if ref:
            return self.values[int(ref.group(1))]
        return self.select_value(token)

    def select_value(self, label: str) -> StepValue:
        label = self.label_merges.get(label, label)
        found = scene_select(self.memory, label)
        if found is None:
            return NoResult()
        return Position(found.label, found.instance, found.pose, found.score)

    def object_of(self, token: str) -> Position | Proposal | NoResult:
        value = self.value_of(token)
        if isinstance(value, Truth):
            if value.subject is None:
                raise _Abort("bad_program")
            return value.subject
        if isinstance(value, Answer):
            raise _Abort("bad_program")
        return value

    def require_object(self, token: str) -> Position | Proposal:
        value = self.object_of(token)
        if isinstance(value, NoResult):
            raise _Abort("select_failed")
        return value

    def truth_operand(self, token: str) -> bool:
        value = self.value_of(token)
        if isinstance(value, Truth):
            return value.value
        if isinstance(value, NoResult):
            return False
        if isinstance(value, (Position, Proposal)):
            return True
        raise _Abort("bad_program")

    # --- geometry ---

    def pixel_bbox(self, obj: Position | Proposal) -> tuple[float, float, float, float]:
        s = self.memory.scale
        pose = obj.pose
        return (
            pose.x / s,
            pose.y / s,
            max(pose.w * _SIZE_TO_XY / s, 1.0),
            max(pose.h * _SIZE_TO_XY / s, 1.0),
        )

    # --- oracle plumbing ---

    def scores(self, sentences: Sequence[str], bbox) -> tuple[float, ...]:
        request = ScoreRequest(
            image_ref=self.image_ref, sentences=tuple(sentences), bbox=bbox
        )
        try:
            return self.oracle.score(request).scores
        except OracleUnavailable:
            raise _Abort("oracle_unavailable") from None

    def attribute_truth(self, label: str, attribute: str, bbox) -> bool:
        """Does the object (or whole image) carry this attribute value?

        The target value is scored against every other candidate of its
        type; it must win the comparison outright. A value outside the
        dictionary gets a single sentence and a plain positive-score test.
        """
        attr_type = self.dictionary.find_type(attribute)
        if attr_type is None:
            sentence = (
                f"The {label} is {attribute}" if label else f"The photo shows {attribute}"
            )
            return self.scores([sentence], bbox)[0] > 0
        candidates = [attribute] + [
            v for v in self.dictionary.candidates(attr_type) if v != attribute
        ]
        sentences = build_sentences(label, attr_type, candidates, self.dictionary)
        scores = self.scores(sentences, bbox)
        return scores[0] >= max(scores[1:]) and scores[0] > min(scores)

    def argmax_answer(self, sentences: Sequence[str], candidates: Sequence[str], bbox) -> Answer:
        scores = self.scores(sentences, bbox)
        return Answer(candidates[int(np.argmax(scores))])

    def image_sentence(self, value: str) -> str:
        attr_type = self.dictionary.find_type(value)
        if attr_type is None:
            return f"The photo shows {value}"
        return build_sentences("", attr_type, [value], self.dictionary)[0]

    def subject_sentence(self, label: str, attribute: str) -> str:
        attr_type = self.dictionary.find_type(attribute)
        if attr_type is None:
            return f"The {label} is {attribute}"
        return build_sentences(label, attr_type, [attribute], self.dictionary)[0]

    # --- region plumbing ---

    def region_proposals(
        self, obj: Position | Proposal, relation: str, inverse: bool, min_score: float = 0.0
    ) -> list[Proposal]:
        try:
            return region_relate(
                self.memory, obj.label, relation, self.lib,
                inverse=inverse, min_score=min_score,
            )
        except KeyError:
            raise _Abort("unknown_relation") from None
        except LookupError:
            raise _Abort("select_failed") from None

    # --- dispatch ---

    def dispatch(self, step: ProgramStep) -> StepValue:
        handler = getattr(self, f"_fn_{step.function}", None)
        if handler is None:
            raise _Abort("unsupported_function")
        if len(step.args) != _ARITY[step.function]:
            raise _Abort("bad_program")
        return handler(*step.args)

    def _fn_select(self, name: str) -> StepValue:
        return self.select_value(name)

    # relate(A, rel) finds the object of A's relation, so the mask runs in
    # its inverse orientation; relate_inv asks for subjects and runs direct.

    def _fn_relate(self, ref: str, relation: str) -> StepValue:
        proposals = self.region_proposals(self.require_object(ref), relation, inverse=True)
        return proposals[0] if proposals else NoResult()

    def _fn_relate_inv(self, ref: str, relation: str) -> StepValue:
        proposals = self.region_proposals(self.require_object(ref), relation, inverse=False)
        return proposals[0] if proposals else NoResult()

    def _relate_name(self, ref: str, relation: str, name: str, inverse: bool) -> StepValue:
        obj = self.require_object(ref)
        try:
            found = region_relate_name(
                self.memory, obj.label, relation, name, self.lib, inverse=inverse
            )
        except KeyError:
            raise _Abort("unknown_relation") from None
        except LookupError:
            raise _Abort("select_failed") from None
        return found if found is not None else NoResult()

    def _fn_relate_name(self, ref: str, relation: str, name: str) -> StepValue:
        return self._relate_name(ref, relation, name, inverse=True)

    def _fn_relate_inv_name(self, ref: str, relation: str, name: str) -> StepValue:
        return self._relate_name(ref, relation, name, inverse=False)

    def _half_plane(self, obj: Position | Proposal, axis: str) -> str:
        cx, cy = obj.pose.center
        if axis == "v":
            return "top" if cy < _HALF else "bottom"
        return "left" if cx < _HALF else "right"

    def _fn_filter_v(self, ref: str, word: str) -> StepValue:
        obj = self.require_object(ref)
        if word not in ("top", "bottom"):
            raise _Abort("bad_program")
        return Truth(self._half_plane(obj, "v") == word, subject=obj)

    def _fn_filter_h(self, ref: str, word: str) -> StepValue:
        obj = self.require_object(ref)
        if word not in ("left", "right"):
            raise _Abort("bad_program")
        return Truth(self._half_plane(obj, "h") == word, subject=obj)

    def _fn_filter(self, ref: str, attribute: str) -> StepValue:
        obj = self.require_object(ref)
        value = self.attribute_truth(obj.label, attribute, self.pixel_bbox(obj))
        return Truth(value, subject=obj)

    def _fn_filter_not(self, ref: str, attribute: str) -> StepValue:
        obj = self.require_object(ref)
        value = self.attribute_truth(obj.label, attribute, self.pixel_bbox(obj))
        return Truth(not value, subject=obj)

    def _fn_verify(self, ref: str, attribute: str) -> StepValue:
        return self._fn_filter(ref, attribute)

    def _fn_verify_f(self, attribute: str) -> StepValue:
        return Truth(self.attribute_truth("", attribute, None))

    def _verify_rel(self, ref: str, relation: str, name: str, inverse: bool) -> StepValue:
        obj = self.require_object(ref)
        proposals = self.region_proposals(obj, relation, inverse=inverse)
        return Truth(any(p.label == name for p in proposals), subject=obj)

    def _fn_verify_rel(self, ref: str, relation: str, name: str) -> StepValue:
        return self._verify_rel(ref, relation, name, inverse=True)

    def _fn_verify_rel_inv(self, ref: str, relation: str, name: str) -> StepValue:
        return self._verify_rel(ref, relation, name, inverse=False)

    def _choose_plane(self, ref: str, a: str, b: str, axis: str) -> StepValue:
        obj = self.require_object(ref)
        word = self._half_plane(obj, axis)
        if word not in (a, b):
            raise _Abort("bad_program")
        return Answer(word)

    def _fn_choose_v(self, ref: str, a: str, b: str) -> StepValue:
        return self._choose_plane(ref, a, b, "v")

    def _fn_choose_h(self, ref: str, a: str, b: str) -> StepValue:
        return self._choose_plane(ref, a, b, "h")

    def _fn_choose_f(self, a: str, b: str) -> StepValue:
        sentences = [self.image_sentence(a), self.image_sentence(b)]
        return self.argmax_answer(sentences, [a, b], None)

    def _fn_choose_subj(self, ref_a: str, ref_b: str, attribute: str) -> StepValue:
        subjects = [self.require_object(ref_a), self.require_object(ref_b)]
        scored = []
        for subject in subjects:
            sentence = self.subject_sentence(subject.label, attribute)
            scored.append(self.scores([sentence], self.pixel_bbox(subject))[0])
        return Answer(subjects[int(np.argmax(scored))].label)

    def _fn_choose_attr(self, ref: str, attr_type: str, a: str, b: str) -> StepValue:
        obj = self.require_object(ref)
        if self.dictionary.has_type(attr_type):
            sentences = build_sentences(obj.label, attr_type, [a, b], self.dictionary)
        else:
            sentences = [f"The {obj.label} is {a}", f"The {obj.label} is {b}"]
        return self.argmax_answer(sentences, [a, b], self.pixel_bbox(obj))

    def _fn_choose_rel_inv(self, ref: str, name: str, rel_a: str, rel_b: str) -> StepValue:
        # Which relation does the named object stand in, relative to ref?
        obj = self.require_object(ref)
        best_rel: str | None = None
        best_score = 0.0
        for relation in (rel_a, rel_b):
            proposals = self.region_proposals(
                obj, relation, inverse=False, min_score=float("-inf")
            )
            scores = [p.score for p in proposals if p.label == name]
            if not scores:
                continue
            score = max(scores)
            if best_rel is None or score > best_score:
                best_rel, best_score = relation, score
        if best_rel is None:
            raise _Abort("select_failed")
        return Answer(best_rel)

    def _fn_query_n(self, ref: str) -> StepValue:
        return Answer(self.require_object(ref).label)

    def _fn_query_v(self, ref: str) -> StepValue:
        return Answer(self._half_plane(self.require_object(ref), "v"))

    def _fn_query_h(self, ref: str) -> StepValue:
        return Answer(self._half_plane(self.require_object(ref), "h"))

    def _fn_query(self, ref: str, attr_type: str) -> StepValue:
        obj = self.require_object(ref)
        if not self.dictionary.has_type(attr_type):
            raise _Abort("oracle_unavailable")
        candidates = self.dictionary.candidates(attr_type)
        sentences = build_sentences(obj.label, attr_type, candidates, self.dictionary)
        return self.argmax_answer(sentences, candidates, self.pixel_bbox(obj))

    def _fn_query_f(self, attr_type: str) -> StepValue:
        if not self.dictionary.has_type(attr_type):
            raise _Abort("oracle_unavailable")
        candidates = self.dictionary.candidates(attr_type)
        sentences = build_sentences("", attr_type, candidates, self.dictionary)
        return self.argmax_answer(sentences, candidates, None)

    def _fn_exist(self, ref: str) -> StepValue:
        value = self.value_of(ref)
        if isinstance(value, Answer):
            raise _Abort("bad_program")
        if isinstance(value, Truth):
            value = value.subject if value.subject is not None else NoResult()
        found = not isinstance(value, NoResult)
        return Truth(found, subject=value if found else None)

    def _fn_and(self, ref_a: str, ref_b: str) -> StepValue:
        return Truth(self.truth_operand(ref_a) and self.truth_operand(ref_b))

    def _fn_or(self, ref_a: str, ref_b: str) -> StepValue:
        return Truth(self.truth_operand(ref_a) or self.truth_operand(ref_b))


def execute(
    program: Program,
    memory: SSPMemory,
    lib: MaskLibrary,
    oracle,
    image_ref: str,
    dictionary: AttributeDictionary | None = None,
    label_merges: Mapping[str, str] | None = None,
) -> ExecutionTrace:
    """Run a parsed program to an Answer or NoAnswer outcome.

    Execution is strictly sequential. An Answer from any step terminates
    immediately; a failed filter or verify before the last step aborts
    with filter_terminated; a no-result value surviving to the end means
    the requested object was never found. label_merges optionally rewrites
    object names before lookup (for vocabularies with multi-word labels);
    it ships empty.
    """
    run = _Run(
        memory=memory,
        lib=lib,
        oracle=oracle,
        image_ref=image_ref,
        dictionary=dictionary if dictionary is not None else default_dictionary(),
        label_merges=dict(label_merges) if label_merges else {},
    )
    last_index = len(program.steps) - 1
    try:
        for step in program.steps:
            if not step.recognized or step.function in _UNSUPPORTED:
                raise _Abort("unsupported_function")
            value = run.dispatch(step)
            run.values.append(value)
            if isinstance(value, Answer):
                return ExecutionTrace(tuple(run.values), value)
            if (
                isinstance(value, Truth)
                and not value.value
                and step.function in _GATES
                and step.step_index != last_index
            ):
                raise _Abort("filter_terminated")
    except _Abort as abort:
        return ExecutionTrace(tuple(run.values), NoAnswer(abort.reason))

    final = run.values[-1]
    if isinstance(final, Truth):
        outcome = Answer("yes" if final.value else "no")
    elif isinstance(final, (Position, Proposal)):
        outcome = Answer(final.label)
    else:
        outcome = NoAnswer("select_failed")
    return ExecutionTrace(tuple(run.values), outcome)


def run_program(
    text: str,
    memory: SSPMemory,
    lib: MaskLibrary,
    oracle,
    image_ref: str,
    dictionary: AttributeDictionary | None = None,
    label_merges: Mapping[str, str] | None = None,
) -> ExecutionTrace:
    """Parse and execute; malformed text becomes a bad_program outcome."""
    try:
        program = parse_program(text)
    except ProgramParseError:
        return ExecutionTrace((), NoAnswer("bad_program"))
    return execute(
        program, memory, lib, oracle, image_ref,
        dictionary=dictionary, label_merges=label_merges,
    )
