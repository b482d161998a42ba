"""Image-text scorers behind one call signature.

Two backends ship. The model backend wraps a pre-trained contrastive
vision-language model and returns its raw image-text similarity logits;
weights are fetched by name and loaded lazily on first use. The color
probe is a self-contained stand-in that needs no downloads: it reads the
mean color of the image and scores sentences by the color words they
mention, which is enough to exercise the service, the wire protocol, and
the prompt rendering on machines without model weights. Both are
deterministic functions of their inputs.
"""

from __future__ import annotations

import math
import re
from typing import Protocol, Sequence

from PIL import Image, ImageStat

__all__ = [
    "COLOR_PROBE",
    "ClipBackend",
    "ColorProbeBackend",
    "ScoreBackend",
    "build_backend",
]

COLOR_PROBE = "color-probe"


class ScoreBackend(Protocol):
    def score(self, image: Image.Image, sentences: Sequence[str]) -> list[float]:
        """One similarity score per sentence, aligned with the input order."""
        ...


# Anchor RGB per color word. Values are rough centers of each name's hue
# range, not calibrated constants; only their relative distances matter.
_COLOR_ANCHORS: dict[str, tuple[int, int, int]] = {
    "black": (0, 0, 0),
    "blue": (40, 60, 220),
    "brown": (140, 80, 30),
    "cyan": (0, 200, 200),
    "gray": (128, 128, 128),
    "green": (40, 170, 60),
    "grey": (128, 128, 128),
    "magenta": (210, 40, 190),
    "orange": (250, 150, 20),
    "pink": (250, 170, 190),
    "purple": (140, 50, 180),
    "red": (220, 40, 40),
    "white": (255, 255, 255),
    "yellow": (250, 220, 40),
}

_MAX_DISTANCE = math.sqrt(3.0) * 255.0
_WORDS = re.compile(r"[a-z]+")


class ColorProbeBackend:
    """Scores sentences by how well their color words match the image.

    Each sentence scores the best similarity between the image's mean RGB
    and the anchor of any color word it mentions, mapped to [0, 1]; a
    sentence with no color word scores 0.0.
    """

    def score(self, image: Image.Image, sentences: Sequence[str]) -> list[float]:
        mean = ImageStat.Stat(image.convert("RGB")).mean
        scores = []
        for sentence in sentences:
            anchors = [
                _COLOR_ANCHORS[w] for w in _WORDS.findall(sentence.lower()) if w in _COLOR_ANCHORS
            ]
            if not anchors:
                scores.append(0.0)
                continue
            scores.append(max(1.0 - _distance(anchor, mean) / _MAX_DISTANCE for anchor in anchors))
        return scores


def _distance(anchor: Sequence[float], mean: Sequence[float]) -> float:
    return math.sqrt(sum((a - m) ** 2 for a, m in zip(anchor, mean)))


class ClipBackend:
    """Contrastive vision-language scoring via image-text logits.

    The heavyweight imports and the weight download happen on the first
    score call, not at construction, so the service can start and answer
    health checks while the model is still cold. Raw similarity logits
    are returned; callers rank by argmax, so any monotone rescaling would
    not change answers.
    """

    def __init__(self, model_name: str, device: str = "cpu"):
        self.model_name = model_name
        self.device = device
        self._model = None
        self._processor = None

    @property
    def loaded(self) -> bool:
        return self._model is not None

    def _ensure_loaded(self):
        if self._model is None:
            import torch  # local import: only this backend needs the stack
            from transformers import CLIPModel, CLIPProcessor

            self._model = CLIPModel.from_pretrained(self.model_name).to(self.device).eval()
            self._processor = CLIPProcessor.from_pretrained(self.model_name)
            self._torch = torch

    def score(self, image: Image.Image, sentences: Sequence[str]) -> list[float]:
        self._ensure_loaded()
        inputs = self._processor(
            text=list(sentences),
            images=image.convert("RGB"),
            return_tensors="pt",
            padding=True,
            truncation=True,
        ).to(self.device)
        with self._torch.inference_mode():
            logits = self._model(**inputs).logits_per_image
        return [float(v) for v in logits[0].cpu().tolist()]


def build_backend(model_name: str, device: str = "cpu") -> ScoreBackend:
    """Backend for a model name; the reserved name selects the color probe."""
    if model_name == COLOR_PROBE:
        return ColorProbeBackend()
    return ClipBackend(model_name, device=device)
