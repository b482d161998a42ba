"""Scene memories: labeled boxes encoded as one 4D spatial semantic pointer.

A scene of n objects becomes a single hypervector

    M = sum_i SP_i (*) X^x_i (*) Y^y_i (*) W^w_i (*) H^h_i

where (*) is circular convolution and the exponents are the object's box in
grid coordinates: location on a 100x100 grid, width/height on a 10x10 grid.
Decoding unbinds an object's pointer and cleans the remainder up against
factored per-axis dictionaries, either exhaustively over every grid point or
with a two-stage argmax (location first against a size-marginal vector, then
size at the winning location).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    HyperVector,
    UnitaryAxisVector,
    bind,
    derive_seed,
    involution,
    make_unitary_axis,
    random_sp,
)

__all__ = [
    "XY_EXTENT",
    "WH_EXTENT",
    "CleanupGrid",
    "DecodeResult",
    "GridPose",
    "SceneAxes",
    "SceneEntry",
    "SceneObject",
    "SSPMemory",
    "build_cleanup_grid",
    "decode_entries",
    "decode_point",
    "encode_scene",
    "normalize_scene",
    "point_vector",
    "scene_metrics",
    "select",
]

# Location grid spans 0..100 inclusive (101 dictionary entries per axis);
# width/height span 0..10 inclusive (11 entries each).
XY_EXTENT = 100.0
WH_EXTENT = 10.0
XY_POINTS = 101
WH_POINTS = 11


@dataclass(frozen=True)
class SceneObject:
    """A labeled box in pixel coordinates, (x, y) the top-left corner."""

    label: str
    x: float
    y: float
    w: float
    h: float
    object_id: str = ""

    def __post_init__(self):
        if not self.label:
            raise ValueError("object label must be non-empty")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"object {self.label!r} has non-positive size")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"object {self.label!r} has negative position")


@dataclass(frozen=True)
class GridPose:
    """A box in grid coordinates: x, y in [0, 100], w, h in [0, 10]."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name, value, hi in (
            ("x", self.x, XY_EXTENT),
            ("y", self.y, XY_EXTENT),
            ("w", self.w, WH_EXTENT),
            ("h", self.h, WH_EXTENT),
        ):
            if not np.isfinite(value) or value < 0 or value > hi:
                raise ValueError(f"pose {name}={value} outside [0, {hi}]")

    @property
    def center(self) -> tuple[float, float]:
        # w/h live on the tenth-scale grid; x10 puts them back in location units.
        return (self.x + self.w * 10.0 / 2.0, self.y + self.h * 10.0 / 2.0)


@dataclass(frozen=True)
class SceneAxes:
    """The four unitary axis vectors spanning location and size."""

    x: UnitaryAxisVector
    y: UnitaryAxisVector
    w: UnitaryAxisVector
    h: UnitaryAxisVector

    @property
    def d(self) -> int:
        return self.x.d

    @classmethod
    def from_seed(cls, d: int, seed: int) -> "SceneAxes":
        return cls(
            x=make_unitary_axis(d, derive_seed(seed, "axis", "x")),
            y=make_unitary_axis(d, derive_seed(seed, "axis", "y")),
            w=make_unitary_axis(d, derive_seed(seed, "axis", "w")),
            h=make_unitary_axis(d, derive_seed(seed, "axis", "h")),
        )


def point_vector(axes: SceneAxes, pose: GridPose) -> HyperVector:
    """X^x (*) Y^y (*) W^w (*) H^h as a single inverse FFT."""
    spec = (
        axes.x.spectrum**pose.x
        * axes.y.spectrum**pose.y
        * axes.w.spectrum**pose.w
        * axes.h.spectrum**pose.h
    )
    return np.fft.ifft(spec).real


@dataclass(frozen=True)
class SceneEntry:
    """One encoded instance: its stable key, semantic pointer, and true pose."""

    instance: str
    sp: HyperVector
    pose: GridPose


@dataclass
class SSPMemory:
    """An encoded scene plus everything needed to query it.

    loc2d is a parallel 2D memory sum_i SP_i (*) X^x_i (*) Y^y_i built during
    encoding; region queries score instances against it. Treated as read-only
    after encode_scene returns.
    """

    m: HyperVector
    loc2d: HyperVector
    vocabulary: dict[str, list[SceneEntry]]
    axes: SceneAxes
    d: int
    scale: float
    image_w: float
    image_h: float
    _grid: "CleanupGrid | None" = field(default=None, repr=False)

    def cleanup_grid(self) -> "CleanupGrid":
        if self._grid is None:
            self._grid = build_cleanup_grid(self.axes)
        return self._grid

    def entries(self) -> list[SceneEntry]:
        return [e for entries in self.vocabulary.values() for e in entries]

    def find_entry(self, instance: str) -> SceneEntry | None:
        for entry in self.entries():
            if entry.instance == instance:
                return entry
        return None


@dataclass(frozen=True)
class CleanupGrid:
    """Factored per-axis cleanup dictionaries, kept in the frequency domain.

    x_powers[k] is the full DFT of X^k, so similarity against any grid point
    is an inner product of spectrum rows; the 4D dictionary is never
    materialized. marginal is the spectrum of R = sum_{w,h} W^w (*) H^h,
    retained for size-marginal visualizations. screen_bins is a fixed spectral
    subsample used by the two-stage location screen; with d <= 256 it covers
    the whole spectrum and the screen becomes exact.
    """

    x_powers: np.ndarray
    y_powers: np.ndarray
    w_powers: np.ndarray
    h_powers: np.ndarray
    marginal: np.ndarray
    screen_bins: np.ndarray
    d: int


SCREEN_BIN_COUNT = 256


def build_cleanup_grid(axes: SceneAxes) -> CleanupGrid:
    d = axes.d
    xs = np.arange(XY_POINTS)[:, None]
    whs = np.arange(WH_POINTS)[:, None]
    x_powers = axes.x.spectrum[None, :] ** xs
    y_powers = axes.y.spectrum[None, :] ** xs
    w_powers = axes.w.spectrum[None, :] ** whs
    h_powers = axes.h.spectrum[None, :] ** whs
    marginal = w_powers.sum(axis=0) * h_powers.sum(axis=0)
    if d <= SCREEN_BIN_COUNT:
        screen_bins = np.arange(d)
    else:
        rng = np.random.default_rng(derive_seed(0, "screen-bins", d))
        screen_bins = np.sort(rng.choice(d, size=SCREEN_BIN_COUNT, replace=False))
    return CleanupGrid(
        x_powers=x_powers,
        y_powers=y_powers,
        w_powers=w_powers,
        h_powers=h_powers,
        marginal=marginal,
        screen_bins=screen_bins,
        d=d,
    )


@dataclass(frozen=True)
class DecodeResult:
    """Cleanup outcome: the winning grid point and its similarity."""

    pose: GridPose
    score: float
    heatmap: np.ndarray | None = None


def normalize_scene(
    image_w: float, image_h: float, objects: list[SceneObject]
) -> list[tuple[str, GridPose]]:
    """Scale pixel boxes into grid coordinates.

    The long image side maps to 100 location units; widths and heights are
    additionally divided by 10 so they land on the coarser size grid. Values
    are clamped into range.
    """
    if image_w <= 0 or image_h <= 0:
        raise ValueError(f"degenerate image size {image_w}x{image_h}")
    s = XY_EXTENT / max(image_w, image_h)
    out = []
    for obj in objects:
        pose = GridPose(
            x=min(max(obj.x * s, 0.0), XY_EXTENT),
            y=min(max(obj.y * s, 0.0), XY_EXTENT),
            w=min(max(obj.w * s / 10.0, 0.0), WH_EXTENT),
            h=min(max(obj.h * s / 10.0, 0.0), WH_EXTENT),
        )
        out.append((obj.label, pose))
    return out


def _instance_key(obj: SceneObject) -> str:
    if obj.object_id:
        return obj.object_id
    return f"{obj.label}@{obj.x:g},{obj.y:g},{obj.w:g},{obj.h:g}"


def encode_scene(
    objects: list[SceneObject],
    image_w: float,
    image_h: float,
    d: int = 1024,
    seed: int = 0,
) -> SSPMemory:
    """Encode a scene into a single 4D memory vector.

    Every instance gets its own random semantic pointer, derived from
    (seed, label, instance key) so the memory is independent of object order.
    Duplicate labels keep one vocabulary entry per instance.
    """
    if not objects:
        raise ValueError("cannot encode an empty scene")
    axes = SceneAxes.from_seed(d, seed)
    poses = normalize_scene(image_w, image_h, objects)
    m_spec = np.zeros(d, dtype=np.complex128)
    loc_spec = np.zeros(d, dtype=np.complex128)
    vocabulary: dict[str, list[SceneEntry]] = {}
    for obj, (label, pose) in zip(objects, poses):
        key = _instance_key(obj)
        sp = random_sp(d, derive_seed(seed, "sp", label, key))
        sp_spec = np.fft.fft(sp)
        xy_spec = axes.x.spectrum**pose.x * axes.y.spectrum**pose.y
        m_spec += sp_spec * xy_spec * (axes.w.spectrum**pose.w * axes.h.spectrum**pose.h)
        loc_spec += sp_spec * xy_spec
        vocabulary.setdefault(label, []).append(SceneEntry(instance=key, sp=sp, pose=pose))
    return SSPMemory(
        m=np.fft.ifft(m_spec).real,
        loc2d=np.fft.ifft(loc_spec).real,
        vocabulary=vocabulary,
        axes=axes,
        d=d,
        scale=XY_EXTENT / max(image_w, image_h),
        image_w=image_w,
        image_h=image_h,
    )


def _size_scores(fq: np.ndarray, grid: CleanupGrid, xi: int, yi: int) -> np.ndarray:
    u = np.conj(fq) * grid.x_powers[xi] * grid.y_powers[yi]
    return ((grid.w_powers * u) @ grid.h_powers.T).real / grid.d


def _screened_location_map(fq: np.ndarray, grid: CleanupGrid) -> np.ndarray:
    # Location evidence must integrate the unknown size coherently: a raw
    # size-marginal drowns the signal in its own norm (121 superposed size
    # vectors), so the screen takes a max over every size plane instead,
    # evaluated on the fixed spectral subsample to stay cheap.
    bins = grid.screen_bins
    t = np.conj(fq)[bins]
    xt = grid.x_powers[:, bins] * t
    yt = grid.y_powers[:, bins]
    locmap = None
    for wi in range(WH_POINTS):
        for hi in range(WH_POINTS):
            row = grid.w_powers[wi, bins] * grid.h_powers[hi, bins]
            plane = ((xt * row) @ yt.T).real
            locmap = plane if locmap is None else np.maximum(locmap, plane)
    return locmap / bins.shape[0]


def decode_point(
    q: HyperVector,
    grid: CleanupGrid,
    strategy: str = "two_stage",
    want_heatmap: bool = False,
) -> DecodeResult:
    """Clean a noisy point vector up to the best-matching grid point.

    two_stage: argmax (x, y) from the screened location map, then argmax
    (w, h) at that location at full precision. exhaustive: argmax over all
    101*101*11*11 points, evaluated lazily one size plane at a time. Ties
    break toward the lexicographically smallest (x, y, w, h); the zero
    vector decodes to (0, 0, 0, 0) with score 0.
    """
    if q.shape[0] != grid.d:
        raise ValueError(f"dimension mismatch: {q.shape[0]} vs {grid.d}")
    fq = np.fft.fft(q)
    heatmap = None
    if strategy == "two_stage":
        locmap = _screened_location_map(fq, grid)
        xi, yi = np.unravel_index(int(np.argmax(locmap)), locmap.shape)
        size = _size_scores(fq, grid, int(xi), int(yi))
        wi, hi = np.unravel_index(int(np.argmax(size)), size.shape)
        score = float(size[wi, hi])
        if want_heatmap:
            heatmap = locmap
    elif strategy == "exhaustive":
        best = None
        xt = grid.x_powers * np.conj(fq)
        locmap = None
        for wi in range(WH_POINTS):
            for hi in range(WH_POINTS):
                plane = ((xt * (grid.w_powers[wi] * grid.h_powers[hi])) @ grid.y_powers.T).real
                if want_heatmap:
                    locmap = plane if locmap is None else np.maximum(locmap, plane)
                flat = int(np.argmax(plane))
                pxi, pyi = np.unravel_index(flat, plane.shape)
                cand = (plane[pxi, pyi] / grid.d, (int(pxi), int(pyi), wi, hi))
                if best is None or cand[0] > best[0] or (cand[0] == best[0] and cand[1] < best[1]):
                    best = cand
        score, (xi, yi, wi, hi) = best
        score = float(score)
        if want_heatmap:
            heatmap = locmap / grid.d
    else:
        raise ValueError(f"unknown decode strategy: {strategy!r}")
    return DecodeResult(
        pose=GridPose(x=float(xi), y=float(yi), w=float(wi), h=float(hi)),
        score=score,
        heatmap=heatmap,
    )


def decode_entries(memory: SSPMemory, entries: list[SceneEntry]) -> list[DecodeResult]:
    """Two-stage decode of encoded instances, batched.

    Stage 1 finds (x, y) by unbinding each pointer from the parallel 2D
    location memory, where the signal is not diluted by the unknown size;
    stage 2 reads (w, h) from the 4D memory at that location.
    """
    if not entries:
        return []
    grid = memory.cleanup_grid()
    f_m = np.fft.fft(memory.m)
    f_loc = np.fft.fft(memory.loc2d)
    results: list[DecodeResult] = []
    for start in range(0, len(entries), 64):
        chunk = entries[start : start + 64]
        f_sps = np.fft.fft(np.stack([e.sp for e in chunk]), axis=1)
        # unbind(v, sp) has spectrum F_v * conj(F_sp); stage 1 needs its
        # conjugate, one elementwise product per entry.
        t = np.conj(f_loc[None, :] * np.conj(f_sps))
        u = t[:, None, :] * grid.x_powers[None, :, :]
        loc = (u.reshape(-1, grid.d) @ grid.y_powers.T).real.reshape(
            len(chunk), XY_POINTS, XY_POINTS
        )
        for i in range(len(chunk)):
            xi, yi = np.unravel_index(int(np.argmax(loc[i])), loc[i].shape)
            fq4 = f_m * np.conj(f_sps[i])
            size = _size_scores(fq4, grid, int(xi), int(yi))
            wi, hi = np.unravel_index(int(np.argmax(size)), size.shape)
            results.append(
                DecodeResult(
                    pose=GridPose(x=float(xi), y=float(yi), w=float(wi), h=float(hi)),
                    score=float(size[wi, hi]),
                )
            )
    return results


@dataclass(frozen=True)
class SelectResult:
    """The decoded pose of the best-matching instance of a label."""

    label: str
    instance: str
    pose: GridPose
    score: float


def select(memory: SSPMemory, label: str, strategy: str = "two_stage") -> SelectResult | None:
    """Unbind a label's pointer(s) from the memory and decode the location.

    With duplicate labels every instance is decoded and the highest-scoring
    one wins. Returns None when the label was never encoded.
    """
    entries = memory.vocabulary.get(label)
    if not entries:
        return None
    best: SelectResult | None = None
    if strategy == "two_stage":
        for entry, res in zip(entries, decode_entries(memory, entries)):
            if best is None or res.score > best.score:
                best = SelectResult(label, entry.instance, res.pose, res.score)
        return best
    grid = memory.cleanup_grid()
    for entry in entries:
        q = bind(memory.m, involution(entry.sp))
        res = decode_point(q, grid, strategy=strategy)
        if best is None or res.score > best.score:
            best = SelectResult(label, entry.instance, res.pose, res.score)
    return best


def scene_metrics(
    memory: SSPMemory, truth: list[tuple[str, GridPose]]
) -> tuple[float, float, float]:
    """Recall quality over a scene: (location MSE, mean IoU, IoU>0.5 fraction).

    Every truth entry is decoded through its own instance pointer. MSE is the
    per-coordinate squared error of (x, y) in grid units; IoU is computed on
    boxes re-expanded to location units (w, h times 10).
    """
    if not truth:
        raise ValueError("scene_metrics needs at least one truth entry")
    entries = []
    for label, pose in truth:
        candidates = memory.vocabulary.get(label)
        if not candidates:
            raise ValueError(f"label {label!r} not in vocabulary")
        entry = min(
            candidates,
            key=lambda e: (e.pose.x - pose.x) ** 2 + (e.pose.y - pose.y) ** 2
            + (e.pose.w - pose.w) ** 2 + (e.pose.h - pose.h) ** 2,
        )
        entries.append((entry, pose))
    decoded = decode_entries(memory, [e for e, _ in entries])
    sq_errors = []
    ious = []
    for (entry, pose), res in zip(entries, decoded):
        sq_errors.append((res.pose.x - pose.x) ** 2)
        sq_errors.append((res.pose.y - pose.y) ** 2)
        ious.append(_box_iou(res.pose, pose))
    ious = np.array(ious)
    return float(np.mean(sq_errors)), float(np.mean(ious)), float(np.mean(ious > 0.5))


def _box_iou(a: GridPose, b: GridPose) -> float:
    ax0, ay0, ax1, ay1 = a.x, a.y, a.x + a.w * 10.0, a.y + a.h * 10.0
    bx0, by0, bx1, by1 = b.x, b.y, b.x + b.w * 10.0, b.y + b.h * 10.0
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    if union <= 0.0:
        return 0.0
    return inter / union
