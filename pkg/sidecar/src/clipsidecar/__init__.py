"""Image-sentence scoring sidecar with red-circle visual prompting."""

from .backends import COLOR_PROBE, ClipBackend, ColorProbeBackend, ScoreBackend, build_backend
from .prompting import circle_box, draw_circle_prompt, stroke_width
from .server import DEFAULT_MODEL, DEFAULT_PORT, ScorePayload, create_app, load_image, main

__version__ = "0.1.0"

__all__ = [
    "COLOR_PROBE",
    "ClipBackend",
    "ColorProbeBackend",
    "DEFAULT_MODEL",
    "DEFAULT_PORT",
    "ScoreBackend",
    "ScorePayload",
    "build_backend",
    "circle_box",
    "create_app",
    "draw_circle_prompt",
    "load_image",
    "main",
    "stroke_width",
]
