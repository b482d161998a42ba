"""Learned spatial query masks and region queries over scene memories.

A query mask is a 500x500 binary template describing where objects that
satisfy a spatial relation tend to sit, relative to an anchor object that
has been normalized to the central 50x50 cells of the frame. Masks are
learned by accumulating rasterized bounding boxes over many annotated
relation samples and thresholding away rarely hit cells. At query time a
mask is rescaled to the anchor's actual size, re-expressed as a sum of
location vectors, and compared against each object's location estimate.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .algebra import HyperVector
from .scene import (
    GridPose,
    SceneAxes,
    SSPMemory,
    XY_EXTENT,
    WH_EXTENT,
    decode_entries,
    select,
)

__all__ = [
    "FRAME_SIZE",
    "ANCHOR_SPAN",
    "MaskLibrary",
    "Proposal",
    "QueryMask",
    "RelationSample",
    "encode_region",
    "learn_mask",
    "load_mask",
    "load_label_class_table",
    "load_relation_table",
    "normalize_relation",
    "relate",
    "relate_name",
    "save_mask",
]

FRAME_SIZE = 500
ANCHOR_SPAN = 50
FRAME_CENTER = FRAME_SIZE / 2.0

# One anchor-frame cell spans anchor_extent/50 of the anchor; sizes live on
# the tenth-scale grid, so this converts a size unit into location units.
_SIZE_TO_XY = XY_EXTENT / WH_EXTENT


@dataclass(frozen=True)
class RelationSample:
    """One annotated relation: the anchor box and the box it relates to.

    Boxes are pixel-space (x, y, w, h) with the origin at the top-left.
    """

    anchor_box: tuple[float, float, float, float]
    relative_box: tuple[float, float, float, float]
    relation: str

    def __post_init__(self):
        for name, box in (("anchor_box", self.anchor_box), ("relative_box", self.relative_box)):
            if len(box) != 4 or box[2] <= 0 or box[3] <= 0:
                raise ValueError(f"{name} must have positive width and height, got {box}")


@dataclass
class QueryMask:
    """Binary spatial template for one relation, anchor-normalized."""

    relation: str
    grid: np.ndarray
    sample_count: int
    _offsets_memo: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.relation:
            raise ValueError("mask relation must be non-empty")
        grid = np.asarray(self.grid, dtype=bool)
        if grid.shape != (FRAME_SIZE, FRAME_SIZE):
            raise ValueError(f"mask grid must be {FRAME_SIZE}x{FRAME_SIZE}, got {grid.shape}")
        if not grid.any():
            raise ValueError(f"mask for {self.relation!r} has no active cells")
        self.grid = grid

    def active_cells(self) -> int:
        return int(self.grid.sum())

    def grid_offsets(self, fx: float, fy: float) -> tuple[np.ndarray, np.ndarray]:
        """Integer (dy, dx) location-grid offsets covered by the scaled mask.

        Cells are rescaled in the anchor frame (one frame cell spans fx by fy
        location units) and rasterized by their full extent, so a cell wider
        than one location unit covers every unit it touches. A cell too small
        to contain a unit center still contributes its own center; without
        that, sub-resolution cells would silently vanish.
        """
        key = (round(fx, 9), round(fy, 9))
        cached = self._offsets_memo.get(key)
        if cached is not None:
            return cached
        rows, cols = np.nonzero(self.grid)
        x_lo, x_hi = _span_to_units((cols - FRAME_CENTER) * fx, fx)
        y_lo, y_hi = _span_to_units((rows - FRAME_CENTER) * fy, fy)
        board = np.zeros(
            (int(y_hi.max() - y_lo.min()), int(x_hi.max() - x_lo.min())), dtype=bool
        )
        oy, ox = int(y_lo.min()), int(x_lo.min())
        for dy in range(int((y_hi - y_lo).max())):
            sel_y = y_lo + dy < y_hi
            for dx in range(int((x_hi - x_lo).max())):
                sel = sel_y & (x_lo + dx < x_hi)
                board[y_lo[sel] + dy - oy, x_lo[sel] + dx - ox] = True
        dys, dxs = np.nonzero(board)
        out = (dys + oy, dxs + ox)
        self._offsets_memo[key] = out
        return out


def _span_to_units(starts: np.ndarray, width: float) -> tuple[np.ndarray, np.ndarray]:
    # Round-half-up keeps adjacent cells gapless; ties must not round to even.
    lo = np.floor(starts + 0.5).astype(np.int64)
    hi = np.floor(starts + width + 0.5).astype(np.int64)
    empty = hi <= lo
    if empty.any():
        mid = np.floor(starts + width / 2.0 + 0.5).astype(np.int64)
        lo[empty] = mid[empty]
        hi[empty] = mid[empty] + 1
    return lo, hi


def learn_mask(
    relation: str,
    samples: list[RelationSample],
    threshold: float = 0.05,
    min_samples: int = 1000,
) -> QueryMask:
    """Accumulate anchor-normalized boxes and keep cells hit often enough.

    Every sample's boxes are scaled so the anchor becomes 50x50 and shifted
    so the anchor center lands on the frame center; the relative box is then
    rasterized into the 500x500 frame. Cells active in fewer than
    ``threshold`` of all samples are dropped.
    """
    if not relation:
        raise ValueError("relation must be non-empty")
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be a fraction, got {threshold}")
    if len(samples) < min_samples:
        raise ValueError(
            f"relation {relation!r} has {len(samples)} samples, need at least {min_samples}"
        )
    counts = np.zeros((FRAME_SIZE, FRAME_SIZE), dtype=np.int64)
    for sample in samples:
        ax, ay, aw, ah = sample.anchor_box
        rx, ry, rw, rh = sample.relative_box
        sx = ANCHOR_SPAN / aw
        sy = ANCHOR_SPAN / ah
        shift_x = FRAME_CENTER - (ax + aw / 2.0) * sx
        shift_y = FRAME_CENTER - (ay + ah / 2.0) * sy
        c0 = max(int(np.floor(rx * sx + shift_x)), 0)
        c1 = min(int(np.ceil((rx + rw) * sx + shift_x)), FRAME_SIZE)
        r0 = max(int(np.floor(ry * sy + shift_y)), 0)
        r1 = min(int(np.ceil((ry + rh) * sy + shift_y)), FRAME_SIZE)
        if c1 > c0 and r1 > r0:
            counts[r0:r1, c0:c1] += 1
    frequency = counts / len(samples)
    keep = (frequency >= threshold) & (counts > 0)
    if not keep.any():
        raise ValueError(f"mask for {relation!r} is empty at threshold {threshold}")
    return QueryMask(relation=relation, grid=keep, sample_count=len(samples))


def encode_region(mask: QueryMask, anchor: GridPose, axes: SceneAxes) -> HyperVector:
    """Express the mask at the anchor's scale and position as one vector.

    The mask is rescaled by the anchor's size, rasterized to integer offsets
    in the anchor frame, and summed as location vectors; the sum is then
    translated algebraically to the anchor center and L2-normalized.
    Rasterizing before translating keeps the result exactly translation
    equivariant even for fractional anchor centers.
    """
    if anchor.w <= 0 or anchor.h <= 0:
        raise ValueError("region anchor must have positive width and height")
    fx = anchor.w * _SIZE_TO_XY / ANCHOR_SPAN
    fy = anchor.h * _SIZE_TO_XY / ANCHOR_SPAN
    dys, dxs = mask.grid_offsets(fx, fy)
    d = axes.x.d
    half = d // 2 + 1
    x_half = axes.x.spectrum[:half]
    y_half = axes.y.spectrum[:half]

    ux = np.unique(dxs)
    x_pows = np.power(x_half[None, :], ux[:, None].astype(float))
    ix = np.searchsorted(ux, dxs)
    # grid_offsets emits row-major order, so equal dy values are contiguous.
    starts = np.flatnonzero(np.r_[True, dys[1:] != dys[:-1]])
    ends = np.r_[starts[1:], len(dys)]
    acc = np.zeros(half, dtype=complex)
    for s, e in zip(starts, ends):
        acc += x_pows[ix[s:e]].sum(axis=0) * np.power(y_half, float(dys[s]))

    cx, cy = anchor.center
    acc *= x_half**cx * y_half**cy
    region = np.fft.irfft(acc, n=d)
    norm = np.linalg.norm(region)
    if norm == 0.0:
        raise ValueError("region vector collapsed to zero")
    return region / norm


@dataclass(frozen=True)
class Proposal:
    """One object positively similar to a queried region."""

    label: str
    instance: str
    score: float
    pose: GridPose

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError("proposal score must be finite")


def normalize_relation(relation: str) -> str:
    return " ".join(relation.replace("_", " ").lower().split())


@dataclass
class MaskLibrary:
    """Masks plus the string tables that route surface relations onto them."""

    masks: dict[str, QueryMask]
    synonym_map: dict[str, str] = field(default_factory=dict)
    inverse_map: dict[str, str] = field(default_factory=dict)
    label_classes: dict[str, str] = field(default_factory=dict)
    _rotated: dict[str, QueryMask] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for surface, target in self.synonym_map.items():
            if target not in self.masks:
                raise ValueError(f"synonym {surface!r} points at unknown mask {target!r}")
        for rel, inv in self.inverse_map.items():
            back = self.inverse_map.get(inv)
            if back is not None and back != rel:
                raise ValueError(f"inverse map is not an involution at {rel!r} <-> {inv!r}")

    def canonical(self, relation: str) -> str:
        key = normalize_relation(relation)
        canonical = self.synonym_map.get(key, key)
        if canonical not in self.masks:
            raise KeyError(f"no mask or synonym for relation {relation!r}")
        return canonical

    def resolve(self, relation: str, inverse: bool = False) -> QueryMask:
        """Find the mask for a surface relation, optionally its inverse.

        Inversion prefers an annotated inverse relation; lacking one, the
        mask is rotated half a turn about the frame center, which is the
        geometric inverse for purely spatial templates.
        """
        canonical = self.canonical(relation)
        if not inverse:
            return self.masks[canonical]
        inv = self.inverse_map.get(canonical)
        if inv is not None and inv in self.masks:
            return self.masks[inv]
        rotated = self._rotated.get(canonical)
        if rotated is None:
            source = self.masks[canonical]
            rotated = QueryMask(
                relation=source.relation,
                grid=np.rot90(source.grid, 2).copy(),
                sample_count=source.sample_count,
            )
            self._rotated[canonical] = rotated
        return rotated

    def class_of(self, label: str) -> str | None:
        return self.label_classes.get(label.lower())

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, mask in sorted(self.masks.items()):
            save_mask(mask, directory / f"{_slug(name)}.mask")

    @classmethod
    def load(
        cls,
        mask_dir: str | Path,
        synonyms_path: str | Path | None = None,
        inverse_path: str | Path | None = None,
        classes_path: str | Path | None = None,
    ) -> "MaskLibrary":
        mask_dir = Path(mask_dir)
        masks = {}
        for path in sorted(mask_dir.glob("*.mask")):
            mask = load_mask(path)
            masks[normalize_relation(mask.relation)] = mask
        if not masks:
            raise ValueError(f"no .mask files under {mask_dir}")
        synonyms = load_relation_table(synonyms_path) if synonyms_path else {}
        inverses = load_relation_table(inverse_path) if inverse_path else {}
        classes = load_label_class_table(classes_path) if classes_path else {}
        # Drop table rows that point at masks this library does not carry.
        synonyms = {k: v for k, v in synonyms.items() if v in masks}
        return cls(masks=masks, synonym_map=synonyms, inverse_map=inverses, label_classes=classes)


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-") or "mask"


def relate(
    memory: SSPMemory,
    anchor_label: str,
    relation: str,
    lib: MaskLibrary,
    inverse: bool = False,
    min_score: float = 0.0,
) -> list[Proposal]:
    """Rank the other objects by how well they sit in the anchored region.

    With inverse=False the mask answers "which objects stand in this
    relation to the anchor"; inverse=True flips the direction.

    Each candidate's location estimate is unbound from the 2D location
    memory and cleaned to its best grid point, and that point is scored
    against the region with the expected unitary kernel (a separable sinc),
    which is the large-d limit of its cosine against the region vector. The
    finite-d realization is unusable for the decision: the member signal is
    1/sqrt(N) for an N-cell region (~0.02 at N~2.5k) while the region's own
    spectral sampling noise contributes ~sqrt(N/2d)/||R|| (~0.03 at d=1024)
    and superposition cross-talk adds more, so raw scores turn membership
    into a coin flip. In the kernel expectation a member scores exactly
    1/sqrt(N) and, on integer geometry, a non-member exactly zero. Only
    strictly positive scores survive, sorted descending with a
    deterministic tie order.
    """
    mask = lib.resolve(relation, inverse=inverse)
    anchor = select(memory, anchor_label)
    if anchor is None:
        raise LookupError(f"anchor {anchor_label!r} not found in scene")
    fx = anchor.pose.w * _SIZE_TO_XY / ANCHOR_SPAN
    fy = anchor.pose.h * _SIZE_TO_XY / ANCHOR_SPAN
    if fx <= 0 or fy <= 0:
        raise ValueError("region anchor must have positive width and height")
    dys, dxs = mask.grid_offsets(fx, fy)
    acx, acy = anchor.pose.center
    scale = 1.0 / np.sqrt(len(dxs))

    candidates = [
        (label, entry)
        for label in sorted(memory.vocabulary)
        for entry in memory.vocabulary[label]
        if not (label == anchor.label and entry.instance == anchor.instance)
    ]
    if not candidates:
        return []
    decoded = decode_entries(memory, [entry for _, entry in candidates])

    proposals = []
    for (label, entry), res in zip(candidates, decoded):
        kernel = np.sinc(res.pose.x - acx - dxs) * np.sinc(res.pose.y - acy - dys)
        score = scale * float(kernel.sum())
        # sinc at integer arguments leaves ~1e-13 residue; snap it so the
        # exact-zero contract for non-members survives the > 0 cut.
        if abs(score) < 1e-9:
            score = 0.0
        if score > min_score:
            proposals.append(Proposal(label, entry.instance, float(score), entry.pose))
    proposals.sort(key=lambda p: (-p.score, p.label, p.instance))
    return proposals


def relate_name(
    memory: SSPMemory,
    anchor_label: str,
    relation: str,
    target_name: str,
    lib: MaskLibrary,
    inverse: bool = False,
) -> Proposal | None:
    """The proposal matching a name, or the best member of the named class."""
    proposals = relate(memory, anchor_label, relation, lib, inverse=inverse)
    wanted = target_name.lower()
    for proposal in proposals:
        if proposal.label.lower() == wanted:
            return proposal
    for proposal in proposals:
        if lib.class_of(proposal.label) == wanted:
            return proposal
    return None


def save_mask(mask: QueryMask, path: str | Path) -> None:
    rows = (mask.grid.astype(np.uint8) + ord("0")).tobytes().decode("ascii")
    lines = [f"relation={mask.relation}", f"size={FRAME_SIZE}x{FRAME_SIZE}", f"samples={mask.sample_count}"]
    lines.extend(rows[i : i + FRAME_SIZE] for i in range(0, len(rows), FRAME_SIZE))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_mask(path: str | Path) -> QueryMask:
    lines = Path(path).read_text(encoding="ascii").splitlines()
    if len(lines) != 3 + FRAME_SIZE:
        raise ValueError(f"{path}: expected {3 + FRAME_SIZE} lines, got {len(lines)}")
    header = dict(_split_header(line, path) for line in lines[:3])
    for key in ("relation", "size", "samples"):
        if key not in header:
            raise ValueError(f"{path}: missing header field {key!r}")
    if header["size"] != f"{FRAME_SIZE}x{FRAME_SIZE}":
        raise ValueError(f"{path}: unsupported mask size {header['size']!r}")
    try:
        sample_count = int(header["samples"])
    except ValueError:
        raise ValueError(f"{path}: samples must be an integer, got {header['samples']!r}") from None
    body = "".join(lines[3:])
    if len(body) != FRAME_SIZE * FRAME_SIZE or set(body) - {"0", "1"}:
        raise ValueError(f"{path}: grid rows must be {FRAME_SIZE} characters of 0/1")
    grid = (np.frombuffer(body.encode("ascii"), dtype=np.uint8) - ord("0")).astype(bool)
    return QueryMask(
        relation=header["relation"],
        grid=grid.reshape(FRAME_SIZE, FRAME_SIZE),
        sample_count=sample_count,
    )


def _split_header(line: str, path) -> tuple[str, str]:
    if "=" not in line:
        raise ValueError(f"{path}: malformed header line {line!r}")
    key, _, value = line.partition("=")
    return key, value


def load_relation_table(path: str | Path) -> dict[str, str]:
    """CSV of relation,relation rows; both sides are normalized."""
    table = {}
    with open(path, newline="", encoding="utf-8") as handle:
        for row in csv.reader(handle):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}: expected 2 columns, got {row}")
            table[normalize_relation(row[0])] = normalize_relation(row[1])
    return table


def load_label_class_table(path: str | Path) -> dict[str, str]:
    """CSV of label,class rows used for class-membership name matching."""
    table = {}
    with open(path, newline="", encoding="utf-8") as handle:
        for row in csv.reader(handle):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}: expected 2 columns, got {row}")
            table[row[0].strip().lower()] = row[1].strip().lower()
    return table
