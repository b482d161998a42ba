"""Red-circle rendering: geometry, clamping, and pixel hygiene."""

import pytest
from hypothesis import given
from hypothesis import strategies as st
from PIL import Image

from clipsidecar.prompting import RED, circle_box, draw_circle_prompt, stroke_width


def test_stroke_width_has_two_pixel_floor():
    assert stroke_width(100, 100) == 2
    assert stroke_width(8, 8) == 2


def test_stroke_width_is_one_percent_of_diagonal():
    # diagonal of 3000 x 4000 is exactly 5000
    assert stroke_width(3000, 4000) == 50


def test_circle_box_inflates_by_ten_percent():
    # (100, 100, 200, 100): center (200, 150), half extents 110 and 55
    assert circle_box((100, 100, 200, 100), 1000, 1000) == (90, 95, 310, 205)


def test_circle_box_clamps_at_corner():
    box = circle_box((0, 0, 50, 50), 500, 500)
    assert box[0] == 0 and box[1] == 0
    assert box[2] > 50 and box[3] > 50  # inflation still visible on the free side


def test_circle_box_off_image_degenerates_to_edge():
    assert circle_box((600, 600, 50, 50), 64, 64) == (63, 63, 63, 63)


@pytest.mark.parametrize("bad", [(0, 0, 0, 10), (0, 0, 10, 0), (0, 0, 10, -1), (0, 0, -5, 5)])
def test_circle_box_rejects_non_positive_size(bad):
    with pytest.raises(ValueError):
        circle_box(bad, 100, 100)


def test_prompt_strokes_pure_red_inside_clamped_box():
    image = Image.new("RGB", (200, 200), (255, 255, 255))
    prompted = draw_circle_prompt(image, (80, 80, 40, 40))
    box = circle_box((80, 80, 40, 40), 200, 200)
    assert box == (78, 78, 122, 122)
    assert prompted.getpixel((100, 78)) == RED  # topmost point of the ellipse
    assert prompted.getpixel((78, 100)) == RED  # leftmost point
    reds = [
        (x, y)
        for y in range(prompted.height)
        for x in range(prompted.width)
        if prompted.getpixel((x, y)) == RED
    ]
    assert reds
    assert all(box[0] <= x <= box[2] and box[1] <= y <= box[3] for x, y in reds)


def test_prompt_leaves_pixels_outside_box_untouched():
    image = Image.new("RGB", (200, 200), (255, 255, 255))
    prompted = draw_circle_prompt(image, (80, 80, 40, 40))
    assert prompted.getpixel((10, 10)) == (255, 255, 255)
    assert prompted.crop((0, 0, 70, 70)).tobytes() == image.crop((0, 0, 70, 70)).tobytes()


def test_prompt_never_mutates_the_source_image():
    image = Image.new("RGB", (64, 64), (200, 200, 200))
    before = image.tobytes()
    draw_circle_prompt(image, (10, 10, 20, 20))
    assert image.tobytes() == before


def test_prompt_without_bbox_is_a_plain_copy():
    image = Image.new("RGB", (32, 32), (1, 2, 3))
    prompted = draw_circle_prompt(image, None)
    assert prompted is not image
    assert prompted.tobytes() == image.tobytes()


def test_prompt_converts_non_rgb_modes():
    image = Image.new("L", (32, 32), 128)
    prompted = draw_circle_prompt(image, (4, 4, 8, 8))
    assert prompted.mode == "RGB"
    assert image.mode == "L"


@given(
    width=st.integers(min_value=8, max_value=128),
    height=st.integers(min_value=8, max_value=128),
    x=st.floats(min_value=-200, max_value=300, allow_nan=False),
    y=st.floats(min_value=-200, max_value=300, allow_nan=False),
    w=st.floats(min_value=0.5, max_value=300, allow_nan=False),
    h=st.floats(min_value=0.5, max_value=300, allow_nan=False),
)
def test_circle_box_always_lands_inside_the_image(width, height, x, y, w, h):
    x0, y0, x1, y1 = circle_box((x, y, w, h), width, height)
    assert 0 <= x0 <= x1 <= width - 1
    assert 0 <= y0 <= y1 <= height - 1
    prompted = draw_circle_prompt(Image.new("RGB", (width, height)), (x, y, w, h))
    assert prompted.size == (width, height)
