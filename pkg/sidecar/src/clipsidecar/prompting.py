"""Red-circle visual prompting.

A scoring request may single out one object by its pixel box. The image
shown to the model then carries a red ellipse around that box so the
model attends to the right region; requests without a box leave the
pixels alone. The geometry is a fixed convention: box inflated by 10
percent about its center, ellipse inscribed in the inflated box, stroke
width max(2 px, 1 percent of the image diagonal), pure red. The box is
clamped to the image so corner or overhanging boxes never raise.
"""

from __future__ import annotations

import math

from PIL import Image, ImageDraw

__all__ = ["RED", "circle_box", "draw_circle_prompt", "stroke_width"]

RED = (255, 0, 0)
INFLATION = 1.10


def stroke_width(width: int, height: int) -> int:
    """Stroke thickness in pixels for an image of the given size."""
    return max(2, round(0.01 * math.hypot(width, height)))


def circle_box(
    bbox: tuple[float, float, float, float], width: int, height: int
) -> tuple[int, int, int, int]:
    """Bounding box of the prompt ellipse, clamped inside the image.

    The ellipse outline is stroked inward from this box, so clamping the
    box keeps every drawn pixel inside the image. Clamping preserves
    corner ordering, so a box entirely off-image degenerates to a point
    at the nearest edge instead of raising.
    """
    x, y, w, h = bbox
    if w <= 0 or h <= 0:
        raise ValueError(f"bbox must have positive size, got {bbox}")
    cx = x + w / 2.0
    cy = y + h / 2.0
    half_w = w * INFLATION / 2.0
    half_h = h * INFLATION / 2.0
    clamp_x = lambda v: min(max(0, round(v)), width - 1)  # noqa: E731
    clamp_y = lambda v: min(max(0, round(v)), height - 1)  # noqa: E731
    return (clamp_x(cx - half_w), clamp_y(cy - half_h), clamp_x(cx + half_w), clamp_y(cy + half_h))


def draw_circle_prompt(
    image: Image.Image, bbox: tuple[float, float, float, float] | None
) -> Image.Image:
    """A copy of the image with the red circle drawn around bbox.

    Without a bbox the copy is returned untouched; the source image is
    never modified either way.
    """
    prompted = image.copy() if image.mode == "RGB" else image.convert("RGB")
    if bbox is None:
        return prompted
    box = circle_box(bbox, prompted.width, prompted.height)
    draw = ImageDraw.Draw(prompted)
    draw.ellipse(box, outline=RED, width=stroke_width(prompted.width, prompted.height))
    return prompted
