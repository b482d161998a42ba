"""Command-line front end.

Subcommands cover the whole pipeline: encode scene graphs into memory
files, query them, learn masks from relation annotations, execute
question programs, and run the capacity and evaluation studies.

Exit codes: 0 success, 1 usage error, 2 data error. The oracle endpoint
given on the command line can be overridden with the HYPERSCENE_ORACLE_URL
environment variable, which is how a deployed scoring service is swapped
in without touching scripts.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .algebra import UnitaryAxisVector
from .evaluation import (
    MemoryConfig,
    capacity_analysis,
    gqa_load_scenes,
    mask_size_correlation,
    run_eval,
    save_report,
    similarity_map,
    write_capacity_csv,
    write_mask_pgms,
    write_pgm,
)
from .gqa import load_questions, load_scene_graphs, relation_samples_from_scenes
from .masks import MaskLibrary, learn_mask, load_label_class_table, load_relation_table
from .oracle import HttpOracle
from .scene import GridPose, SceneAxes, SceneEntry, SSPMemory, encode_scene, select
from .synthetic import build_mask_library, generate_question_suite

ORACLE_ENV_VAR = "HYPERSCENE_ORACLE_URL"

log = logging.getLogger(__name__)


class DataError(RuntimeError):
    """Input that parsed as a request but cannot be worked with."""


# -- memory persistence ------------------------------------------------------

def save_memory(memory: SSPMemory, path: str | Path, image_id: str = "") -> None:
    """Write a memory to a .npz archive, axes included, fully self-contained."""
    entries = memory.entries()
    labels: list[str] = []
    for label, group in memory.vocabulary.items():
        labels.extend([label] * len(group))
    np.savez_compressed(
        path,
        m=memory.m,
        loc2d=memory.loc2d,
        axis_x=memory.axes.x.spectrum,
        axis_y=memory.axes.y.spectrum,
        axis_w=memory.axes.w.spectrum,
        axis_h=memory.axes.h.spectrum,
        labels=np.array(labels),
        instances=np.array([e.instance for e in entries]),
        poses=np.array([[e.pose.x, e.pose.y, e.pose.w, e.pose.h] for e in entries]),
        sps=np.array([e.sp for e in entries]),
        meta=np.array([json.dumps({
            "d": memory.d,
            "scale": memory.scale,
            "image_w": memory.image_w,
            "image_h": memory.image_h,
            "image_id": image_id,
        })]),
    )


def _axis_from_spectrum(spectrum: np.ndarray) -> UnitaryAxisVector:
    return UnitaryAxisVector(base=np.fft.ifft(spectrum).real, spectrum=spectrum)


def load_memory(path: str | Path) -> tuple[SSPMemory, str]:
    """Read a memory archive back; returns (memory, image_id)."""
    try:
        with np.load(path) as data:
            meta = json.loads(str(data["meta"][0]))
            axes = SceneAxes(
                x=_axis_from_spectrum(data["axis_x"]),
                y=_axis_from_spectrum(data["axis_y"]),
                w=_axis_from_spectrum(data["axis_w"]),
                h=_axis_from_spectrum(data["axis_h"]),
            )
            vocabulary: dict[str, list[SceneEntry]] = {}
            for label, instance, pose, sp in zip(
                data["labels"], data["instances"], data["poses"], data["sps"]
            ):
                vocabulary.setdefault(str(label), []).append(
                    SceneEntry(
                        instance=str(instance),
                        sp=np.asarray(sp),
                        pose=GridPose(*(float(v) for v in pose)),
                    )
                )
            memory = SSPMemory(
                m=data["m"],
                loc2d=data["loc2d"],
                vocabulary=vocabulary,
                axes=axes,
                d=int(meta["d"]),
                scale=float(meta["scale"]),
                image_w=float(meta["image_w"]),
                image_h=float(meta["image_h"]),
            )
            return memory, str(meta.get("image_id", ""))
    except (KeyError, ValueError, OSError) as exc:
        raise DataError(f"cannot read memory file {path}: {exc}") from exc


# -- shared helpers ----------------------------------------------------------

def _packaged(name: str) -> Path:
    handle = resources.files("hyperscene.data").joinpath(name)
    with resources.as_file(handle) as path:
        return Path(path)


def _load_library(spec: str) -> MaskLibrary:
    if spec == "builtin":
        return build_mask_library()
    try:
        return MaskLibrary.load(
            spec,
            synonyms_path=_packaged("synonyms.csv"),
            inverse_path=_packaged("inverse.csv"),
            classes_path=_packaged("hypernyms.csv"),
        )
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def _load_scenes(path: str) -> dict:
    try:
        scenes, skipped = load_scene_graphs(path)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read scene graphs {path}: {exc}") from exc
    if skipped:
        print(f"skipped {skipped} malformed scene record(s)", file=sys.stderr)
    if not scenes:
        raise DataError(f"no usable scenes in {path}")
    return scenes


def _resolve_oracle_spec(spec: str):
    override = os.environ.get(ORACLE_ENV_VAR)
    if override:
        spec = override
    if spec == "mock":
        return "mock"
    if spec.startswith("http://") or spec.startswith("https://"):
        return HttpOracle(spec)
    raise DataError(f"oracle must be 'mock' or an http(s) URL, got {spec!r}")


def _pixel_bbox(pose: GridPose, scale: float) -> list[float]:
    return [
        pose.x / scale,
        pose.y / scale,
        max(pose.w * 10.0 / scale, 1.0),
        max(pose.h * 10.0 / scale, 1.0),
    ]


# -- subcommand handlers -----------------------------------------------------

def cmd_encode(args) -> int:
    scenes = _load_scenes(args.scene_graphs)
    out = Path(args.out)
    as_dir = len(scenes) > 1 or out.is_dir() or str(args.out).endswith(os.sep)
    if as_dir:
        out.mkdir(parents=True, exist_ok=True)
    for image_id, scene in sorted(scenes.items()):
        memory = encode_scene(
            list(scene.objects), scene.image_w, scene.image_h, d=args.dim, seed=args.seed
        )
        path = out / f"{image_id}.npz" if as_dir else out
        save_memory(memory, path, image_id=image_id)
        print(f"encoded {image_id}: {len(scene.objects)} objects, d={args.dim}, "
              f"seed={args.seed} -> {path}")
    return 0


def cmd_select(args) -> int:
    memory, _ = load_memory(args.memory)
    result = select(memory, args.label.strip().lower())
    if result is None:
        print(json.dumps({"found": False, "label": args.label}))
        return 0
    print(json.dumps({
        "found": True,
        "label": result.label,
        "instance": result.instance,
        "grid_pose": {
            "x": result.pose.x, "y": result.pose.y,
            "w": result.pose.w, "h": result.pose.h,
        },
        "bbox_pixels": _pixel_bbox(result.pose, memory.scale),
        "score": result.score,
    }))
    return 0


def cmd_learn_masks(args) -> int:
    scenes = _load_scenes(args.scene_graphs)
    synonyms = load_relation_table(_packaged("synonyms.csv"))
    grouped = relation_samples_from_scenes(scenes.values(), synonyms)
    masks = {}
    skipped = []
    for relation in sorted(grouped):
        samples = grouped[relation]
        if len(samples) < args.min_samples:
            skipped.append(f"{relation}({len(samples)})")
            continue
        masks[relation] = learn_mask(
            relation, samples, threshold=args.threshold, min_samples=args.min_samples
        )
    if not masks:
        raise DataError(
            f"no relation reached {args.min_samples} samples; "
            f"largest groups: {', '.join(skipped[:8]) or 'none'}"
        )
    lib = MaskLibrary(
        masks=masks,
        synonym_map={k: v for k, v in synonyms.items() if v in masks},
    )
    lib.save(args.out)
    print(f"learned {len(masks)} mask(s) -> {args.out}: {', '.join(sorted(masks))}")
    if skipped:
        print(f"below min-samples: {', '.join(skipped)}", file=sys.stderr)
    return 0


def cmd_run_program(args) -> int:
    from .oracle import MockOracle
    from .programs import NoAnswer, run_program

    lib = _load_library(args.masks)
    oracle = _resolve_oracle_spec(args.oracle)
    if oracle == "mock":
        if not args.scene_graphs:
            print("error: --oracle mock needs --scene-graphs for ground truth",
                  file=sys.stderr)
            return 1
        scenes = _load_scenes(args.scene_graphs)
        oracle = MockOracle({image_id: s.facts for image_id, s in scenes.items()})

    try:
        questions, skipped = load_questions(args.programs)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read programs {args.programs}: {exc}") from exc
    if skipped:
        print(f"skipped {skipped} malformed question line(s)", file=sys.stderr)
    if not questions:
        raise DataError(f"no usable questions in {args.programs}")

    memory_path = Path(args.memory)
    if not memory_path.exists():
        raise DataError(f"memory path {memory_path} does not exist")
    memories: dict[str, SSPMemory] = {}
    single: SSPMemory | None = None
    if memory_path.is_file():
        single, _ = load_memory(memory_path)

    answered = correct = no_answer = missing = 0
    scored = 0
    for q in questions:
        if single is not None:
            memory = single
        else:
            memory = memories.get(q.image_id)
            if memory is None:
                candidate = memory_path / f"{q.image_id}.npz"
                if not candidate.is_file():
                    missing += 1
                    print(json.dumps({
                        "question_id": q.question_id, "image_id": q.image_id,
                        "answer": None, "reason": "no_memory",
                    }))
                    continue
                memory, _ = load_memory(candidate)
                memories[q.image_id] = memory
        trace = run_program(q.program, memory, lib, oracle, q.image_id)
        record = {"question_id": q.question_id, "image_id": q.image_id}
        if isinstance(trace.outcome, NoAnswer):
            no_answer += 1
            record.update(answer=None, reason=trace.outcome.reason)
        else:
            answered += 1
            record.update(answer=trace.answer, reason=None)
            if q.answer:
                scored += 1
                ok = trace.answer.strip().lower() == q.answer
                correct += ok
                record["correct"] = ok
        print(json.dumps(record))
    summary = f"{len(questions)} question(s): {answered} answered, {no_answer} no-answer"
    if missing:
        summary += f", {missing} without memory"
    if scored:
        summary += f"; accuracy {correct}/{scored} = {correct / scored:.1%}"
    print(summary, file=sys.stderr)
    return 0


def cmd_capacity(args) -> int:
    scenes = gqa_load_scenes(
        scene_count=args.scenes, mean_objects=args.mean_objects, seed=args.seed
    )
    rows = capacity_analysis(args.dims, scenes, seeds=list(range(args.seeds)))
    print(f"{'dim':>6} {'mse':>10} {'iou':>7} {'items%':>8}")
    for row in rows:
        print(f"{row.dim:>6} {row.mse:>10.2f} {row.iou:>7.3f} {row.items_pct:>8.2f}")
    if args.out:
        write_capacity_csv(rows, f"{args.out}.csv")
        Path(f"{args.out}.json").write_text(
            json.dumps([dataclasses.asdict(r) for r in rows], indent=2) + "\n",
            encoding="utf-8",
        )
        print(f"wrote {args.out}.csv and {args.out}.json", file=sys.stderr)
    if args.viz:
        scene = scenes[0]
        memory = encode_scene(
            list(scene.objects), scene.image_w, scene.image_h,
            d=args.dims[-1], seed=0,
        )
        label = scene.objects[0].label
        viz_dir = Path(args.viz)
        viz_dir.mkdir(parents=True, exist_ok=True)
        write_pgm(similarity_map(memory, label), viz_dir / f"heatmap-{label}.pgm")
        print(f"wrote {viz_dir}/heatmap-{label}.pgm", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    lib = _load_library(args.masks)
    if args.dataset.startswith("synthetic"):
        parts = args.dataset.split(":")
        count = int(parts[1]) if len(parts) > 1 else 200
        seed = int(parts[2]) if len(parts) > 2 else 13
        dataset = generate_question_suite(lib, count=count, seed=seed)
    else:
        root = Path(args.dataset)
        if not root.is_dir():
            raise DataError(
                f"--dataset must be 'synthetic[:count[:seed]]' or a directory "
                f"with scene_graphs.json and questions.jsonl, got {args.dataset!r}"
            )
        from .gqa import ingest_gqa

        try:
            dataset = ingest_gqa(root / "scene_graphs.json", root / "questions.jsonl")
        except (OSError, ValueError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot ingest {root}: {exc}") from exc
        if not dataset.questions:
            raise DataError(f"dataset under {root} has no usable questions")
        if dataset.skipped_scenes or dataset.skipped_questions:
            print(
                f"skipped {dataset.skipped_scenes} scene(s), "
                f"{dataset.skipped_questions} question(s)",
                file=sys.stderr,
            )

    oracle = _resolve_oracle_spec(args.oracle)
    report = run_eval(
        dataset,
        MemoryConfig(d=args.dim),
        lib,
        oracle,
        seeds=list(range(args.seeds)),
        workers=args.workers,
        max_questions=args.max_questions,
    )
    try:
        correlation = mask_size_correlation(report, lib)
    except ValueError:
        correlation = None
    report = dataclasses.replace(report, correlation=correlation)

    save_report(report, args.report)
    print(f"questions: {report.question_total}"
          + (" (uniform subset)" if report.subset_flagged else ""))
    print(f"accuracy: {report.accuracy_mean:.3%} (std {report.accuracy_std:.3%} "
          f"over {len(report.seed_results)} seed(s))")
    for name, counts in report.categories.items():
        if counts.total == 0:
            continue
        print(f"  {name:<9} total={counts.total:<5} accuracy={counts.accuracy:.3%} "
              f"no-answer={counts.no_answer_rate:.3%}")
    if report.no_answer_reasons:
        reasons = ", ".join(f"{k}={v}" for k, v in report.no_answer_reasons.items())
        print(f"no-answer reasons: {reasons}")
    if correlation is not None and not correlation.degenerate:
        print(f"mask-size correlation: r={correlation.r:.3f} "
              f"(one-sided p={correlation.p_one_sided:.3f}, n={correlation.n})")
    print(f"report -> {args.report}", file=sys.stderr)
    if args.viz:
        written = write_mask_pgms(lib, args.viz)
        print(f"wrote {len(written)} mask PGM(s) under {args.viz}", file=sys.stderr)
    return 0


# -- parser ------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; the contract here says 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _dims(text: str) -> list[int]:
    try:
        dims = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad dimension list {text!r}") from exc
    if not dims or any(d < 2 for d in dims):
        raise argparse.ArgumentTypeError(f"bad dimension list {text!r}")
    return dims


def build_parser() -> _Parser:
    parser = _Parser(
        prog="hyperscene",
        description="Scene memories, spatial query masks, and program evaluation.",
        epilog=f"Set {ORACLE_ENV_VAR} to override any --oracle endpoint.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("encode", help="encode scene graphs into memory archives")
    p.add_argument("--scene-graphs", required=True, metavar="F")
    p.add_argument("--dim", type=int, default=1024, metavar="D")
    p.add_argument("--seed", type=int, default=0, metavar="S")
    p.add_argument("--out", required=True, metavar="M",
                   help="output .npz (single scene) or directory")
    p.set_defaults(handler=cmd_encode)

    p = sub.add_parser("select", help="decode one label from a memory archive")
    p.add_argument("--memory", required=True, metavar="M")
    p.add_argument("--label", required=True, metavar="L")
    p.set_defaults(handler=cmd_select)

    p = sub.add_parser("learn-masks", help="learn query masks from relation annotations")
    p.add_argument("--scene-graphs", required=True, metavar="F")
    p.add_argument("--min-samples", type=int, default=1000)
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(handler=cmd_learn_masks)

    p = sub.add_parser("run-program", help="execute question programs against memories")
    p.add_argument("--memory", required=True, metavar="M",
                   help="memory .npz or a directory of <image_id>.npz")
    p.add_argument("--masks", required=True, metavar="DIR",
                   help="mask directory, or 'builtin' for the packaged library")
    p.add_argument("--oracle", default="mock", metavar="ORACLE",
                   help="'mock' or an http(s) scoring endpoint")
    p.add_argument("--programs", required=True, metavar="F", help="JSON Lines question file")
    p.add_argument("--scene-graphs", metavar="F2",
                   help="ground truth for the mock oracle")
    p.set_defaults(handler=cmd_run_program)

    p = sub.add_parser("capacity", help="decode-quality table over dimensions")
    p.add_argument("--dims", type=_dims, default=[512, 1024, 2048])
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--scenes", type=int, default=200)
    p.add_argument("--mean-objects", type=int, default=17)
    p.add_argument("--seed", type=int, default=0, help="scene generation seed")
    p.add_argument("--out", metavar="PREFIX", help="also write PREFIX.csv and PREFIX.json")
    p.add_argument("--viz", metavar="DIR", help="write a similarity heatmap PGM")
    p.set_defaults(handler=cmd_capacity)

    p = sub.add_parser("eval", help="end-to-end evaluation with report")
    p.add_argument("--dataset", required=True, metavar="D",
                   help="'synthetic[:count[:seed]]' or a directory with "
                        "scene_graphs.json and questions.jsonl")
    p.add_argument("--oracle", default="mock", metavar="ORACLE")
    p.add_argument("--report", required=True, metavar="OUT.json")
    p.add_argument("--masks", default="builtin", metavar="DIR")
    p.add_argument("--dim", type=int, default=1024)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--max-questions", type=int, default=None,
                   help="seeded uniform subset cap (flagged in the report)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--viz", metavar="DIR", help="write mask PGMs")
    p.set_defaults(handler=cmd_eval)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("HYPERSCENE_LOG", "WARNING"))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse raises for --help (code 0) and usage errors (mapped to 1).
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
