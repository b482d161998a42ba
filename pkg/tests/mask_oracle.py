"""Reference implementations for mask learning, written the slow way.

Everything here recomputes the accumulation cell by cell with explicit
overlap tests so the production code can be checked bit for bit against an
independent derivation.
"""

import math

import numpy as np

from hyperscene.masks import RelationSample

FRAME = 500
ANCHOR = 50
CENTER = 250.0


def accumulate_reference(samples):
    counts = np.zeros((FRAME, FRAME), dtype=np.int64)
    for sample in samples:
        ax, ay, aw, ah = sample.anchor_box
        rx, ry, rw, rh = sample.relative_box
        sx = ANCHOR / aw
        sy = ANCHOR / ah
        off_x = CENTER - (ax + aw / 2.0) * sx
        off_y = CENTER - (ay + ah / 2.0) * sy
        x0 = rx * sx + off_x
        x1 = (rx + rw) * sx + off_x
        y0 = ry * sy + off_y
        y1 = (ry + rh) * sy + off_y
        for row in range(max(int(math.floor(y0)), 0), min(int(math.ceil(y1)), FRAME)):
            if not (row < y1 and row + 1 > y0):
                continue
            for col in range(max(int(math.floor(x0)), 0), min(int(math.ceil(x1)), FRAME)):
                if col < x1 and col + 1 > x0:
                    counts[row, col] += 1
    return counts


def threshold_reference(counts, sample_count, threshold):
    keep = np.zeros((FRAME, FRAME), dtype=bool)
    for row, col in zip(*np.nonzero(counts)):
        keep[row, col] = counts[row, col] / sample_count >= threshold
    return keep


def right_offset_samples(n, seed, relation="to the right of"):
    """Samples whose relative box starts at or right of the anchor center.

    After anchor normalization the relative box's left edge maps to frame
    column >= 250 by construction, so every active cell of the learned mask
    must sit in the right half.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        aw = rng.uniform(30.0, 120.0)
        ah = rng.uniform(30.0, 120.0)
        ax = rng.uniform(0.0, 200.0)
        ay = rng.uniform(100.0, 300.0)
        gap_frame = rng.uniform(0.0, 150.0)
        width_frame = rng.uniform(10.0, 80.0)
        height_frame = rng.uniform(10.0, 80.0)
        jitter_frame = rng.uniform(-40.0, 40.0)
        rx = (ax + aw / 2.0) + gap_frame * aw / ANCHOR
        rw = width_frame * aw / ANCHOR
        rh = height_frame * ah / ANCHOR
        ry = (ay + ah / 2.0) + (jitter_frame - height_frame / 2.0) * ah / ANCHOR
        out.append(RelationSample((ax, ay, aw, ah), (rx, ry, rw, rh), relation))
    return out


def left_offset_samples(n, seed, relation="to the left of"):
    mirrored = []
    for sample in right_offset_samples(n, seed, relation):
        ax, ay, aw, ah = sample.anchor_box
        rx, ry, rw, rh = sample.relative_box
        # Reflect about the anchor's vertical center line.
        center = ax + aw / 2.0
        mirrored.append(
            RelationSample((ax, ay, aw, ah), (2.0 * center - rx - rw, ry, rw, rh), relation)
        )
    return mirrored
