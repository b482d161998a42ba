"""HTTP scoring service.

POST /score takes {image, bbox, sentences}, renders the red-circle
prompt when a box is present, and returns {scores} aligned with the
sentences. GET /health answers {"status": "ok"}. Malformed input is
HTTP 400; a scoring failure is HTTP 500. The image field carries either
a path readable by the server or base64-encoded image bytes.

One backend instance is shared by all requests and scoring calls are
serialized through a lock, so concurrent requests queue for the model
instead of contending for it; the server's worker pool bounds how many
can wait. The protocol itself is stateless.
"""

from __future__ import annotations

import argparse
import base64
import binascii
import io
import math
import os
import threading
from typing import Sequence

import uvicorn
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel, Field, field_validator

from .backends import COLOR_PROBE, ScoreBackend, build_backend
from .prompting import draw_circle_prompt

__all__ = ["DEFAULT_MODEL", "DEFAULT_PORT", "ScorePayload", "create_app", "load_image", "main"]

DEFAULT_MODEL = "openai/clip-vit-base-patch32"
DEFAULT_PORT = 8008
MODEL_ENV_VAR = "CLIPSIDECAR_MODEL"
PORT_ENV_VAR = "CLIPSIDECAR_PORT"


class ScorePayload(BaseModel):
    """Wire form of one scoring request."""

    image: str
    sentences: list[str] = Field(min_length=1)
    bbox: tuple[float, float, float, float] | None = None

    @field_validator("bbox")
    @classmethod
    def _positive_size(cls, value):
        if value is not None and (value[2] <= 0 or value[3] <= 0):
            raise ValueError(f"bbox must be (x, y, w, h) with positive size, got {value}")
        return value


def load_image(ref: str) -> Image.Image:
    """Decode the wire image field: an existing file path, else base64 bytes.

    The two forms cannot collide in practice: base64 text is never an
    existing path, and real paths contain characters outside the base64
    alphabet. ValueError on anything that is neither.
    """
    if not ref:
        raise ValueError("empty image reference")
    if os.path.isfile(ref):
        try:
            with Image.open(ref) as img:
                return img.convert("RGB")
        except (OSError, UnidentifiedImageError) as exc:
            raise ValueError(f"unreadable image file {ref!r}: {exc}") from exc
    try:
        raw = base64.b64decode(ref, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ValueError("image is neither an existing file path nor valid base64") from exc
    try:
        with Image.open(io.BytesIO(raw)) as img:
            return img.convert("RGB")
    except (OSError, UnidentifiedImageError) as exc:
        raise ValueError(f"base64 payload is not a decodable image: {exc}") from exc


def create_app(backend: ScoreBackend) -> FastAPI:
    """The service around one shared backend instance."""
    app = FastAPI(title="clipsidecar")
    lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def _malformed(request: Request, exc: RequestValidationError):
        # The wire protocol promises 400 for malformed input, not 422.
        first = exc.errors()[0] if exc.errors() else {}
        detail = f"malformed request: {first.get('msg', 'invalid body')}"
        return JSONResponse(status_code=400, content={"detail": detail})

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/score")
    def score(payload: ScorePayload) -> dict:
        try:
            image = load_image(payload.image)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        prompted = draw_circle_prompt(image, payload.bbox)
        with lock:
            try:
                scores = [float(s) for s in backend.score(prompted, payload.sentences)]
            except Exception as exc:
                raise HTTPException(status_code=500, detail=f"model failure: {exc}")
        if len(scores) != len(payload.sentences) or not all(math.isfinite(s) for s in scores):
            raise HTTPException(
                status_code=500,
                detail=f"model failure: {len(scores)} scores for "
                f"{len(payload.sentences)} sentences, or non-finite values",
            )
        return {"scores": scores}

    return app


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="clip-sidecar",
        description="Image-sentence scoring service with red-circle visual prompting.",
    )
    parser.add_argument("--host", default="127.0.0.1", help="listen address")
    parser.add_argument(
        "--port",
        type=int,
        default=None,
        help=f"listen port (default: ${PORT_ENV_VAR} or {DEFAULT_PORT})",
    )
    parser.add_argument(
        "--model",
        default=None,
        help=f"model name, or '{COLOR_PROBE}' for the downloadless probe "
        f"(default: ${MODEL_ENV_VAR} or {DEFAULT_MODEL})",
    )
    parser.add_argument("--device", default="cpu", help="device for model inference")
    args = parser.parse_args(argv)
    model = args.model if args.model is not None else os.environ.get(MODEL_ENV_VAR, DEFAULT_MODEL)
    port = args.port if args.port is not None else int(os.environ.get(PORT_ENV_VAR, DEFAULT_PORT))
    uvicorn.run(create_app(build_backend(model, device=args.device)), host=args.host, port=port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
