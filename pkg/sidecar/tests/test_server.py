"""Wire protocol conformance: routes, status codes, and exact bytes.

The three contract points covered here: a stub-backed round trip that
must reproduce the score list byte for byte, the solid-color sanity
probe whose argmax must land on the matching sentence, and the health
endpoint answering {"status": "ok"}.
"""

import base64
import io
import json
import threading
import time

import httpx
import pytest
import uvicorn
from fastapi.testclient import TestClient
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from clipsidecar.backends import ColorProbeBackend
from clipsidecar.prompting import RED
from clipsidecar.server import ScorePayload, create_app, load_image

FROZEN_SCORES = [0.125, -3.5, 7.0]
# json.dumps(..., separators=(",", ":")) of the frozen list; the response
# body must match this byte for byte.
FROZEN_BODY = b'{"scores":[0.125,-3.5,7.0]}'


class FixedBackend:
    """Echoes a frozen score list regardless of input, recording calls."""

    def __init__(self, scores=tuple(FROZEN_SCORES)):
        self.scores = list(scores)
        self.calls = []

    def score(self, image, sentences):
        self.calls.append((image, tuple(sentences)))
        return list(self.scores)


class EchoLengthBackend:
    def score(self, image, sentences):
        return [0.5] * len(sentences)


class FailingBackend:
    def score(self, image, sentences):
        raise RuntimeError("weights exploded")


def png_b64(color=(255, 0, 0), size=(64, 64)):
    buf = io.BytesIO()
    Image.new("RGB", size, color).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


@pytest.fixture()
def stub():
    return FixedBackend()


@pytest.fixture()
def client(stub):
    return TestClient(create_app(stub))


# --- the three contract points ---


def test_health_returns_ok(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "ok"}
    assert response.content == b'{"status":"ok"}'


def test_stub_round_trip_is_byte_exact(client):
    response = client.post(
        "/score", json={"image": png_b64(), "bbox": None, "sentences": ["a", "b", "c"]}
    )
    assert response.status_code == 200
    assert response.content == FROZEN_BODY
    assert response.content == json.dumps({"scores": FROZEN_SCORES}, separators=(",", ":")).encode()
    assert response.json()["scores"] == FROZEN_SCORES


def test_sanity_probe_solid_red_image():
    client = TestClient(create_app(ColorProbeBackend()))
    response = client.post(
        "/score",
        json={"image": png_b64((255, 0, 0)), "bbox": None, "sentences": ["a red image", "a blue image"]},
    )
    scores = response.json()["scores"]
    assert scores.index(max(scores)) == 0


def test_sanity_probe_solid_blue_image():
    client = TestClient(create_app(ColorProbeBackend()))
    response = client.post(
        "/score",
        json={"image": png_b64((0, 0, 255)), "bbox": None, "sentences": ["a red image", "a blue image"]},
    )
    scores = response.json()["scores"]
    assert scores.index(max(scores)) == 1


def test_sanity_probe_survives_the_circle_prompt():
    # The drawn circle adds red pixels; on a solid blue image the thin
    # stroke must not flip the argmax toward the red sentence.
    client = TestClient(create_app(ColorProbeBackend()))
    response = client.post(
        "/score",
        json={
            "image": png_b64((0, 0, 255)),
            "bbox": [16, 16, 32, 32],
            "sentences": ["a red image", "a blue image"],
        },
    )
    scores = response.json()["scores"]
    assert scores.index(max(scores)) == 1


# --- request handling ---


def test_backend_receives_the_prompted_image(client, stub):
    client.post(
        "/score",
        json={"image": png_b64((255, 255, 255)), "bbox": [16, 16, 32, 32], "sentences": ["a", "b", "c"]},
    )
    image, sentences = stub.calls[0]
    assert sentences == ("a", "b", "c")
    assert image.size == (64, 64)
    assert RED in {color for _, color in image.getcolors(64 * 64)}


def test_whole_image_requests_skip_the_circle(client, stub):
    client.post(
        "/score", json={"image": png_b64((255, 255, 255)), "bbox": None, "sentences": ["a", "b", "c"]}
    )
    image, _ = stub.calls[0]
    assert RED not in {color for _, color in image.getcolors(64 * 64)}


def test_image_as_file_path(client, tmp_path):
    path = tmp_path / "scene.png"
    Image.new("RGB", (32, 32), (0, 128, 0)).save(path)
    response = client.post("/score", json={"image": str(path), "sentences": ["a", "b", "c"]})
    assert response.status_code == 200


def test_overhanging_bbox_is_clamped_not_rejected(client):
    response = client.post(
        "/score",
        json={"image": png_b64(), "bbox": [600.0, 600.0, 100.0, 100.0], "sentences": ["a", "b", "c"]},
    )
    assert response.status_code == 200


def test_corner_bbox_is_clamped_not_rejected(client):
    response = client.post(
        "/score", json={"image": png_b64(), "bbox": [0, 0, 8, 8], "sentences": ["a", "b", "c"]}
    )
    assert response.status_code == 200


# --- error mapping ---


@pytest.mark.parametrize(
    "body",
    [
        {"sentences": ["x"]},
        {"image": "placeholder", "sentences": []},
        {"image": "placeholder"},
        {"image": "placeholder", "sentences": "not a list"},
        {"image": "placeholder", "bbox": [1, 2, 3], "sentences": ["x"]},
        {"image": "placeholder", "bbox": [0, 0, -5, 5], "sentences": ["x"]},
        {"image": "placeholder", "bbox": [0, 0, 5, 0], "sentences": ["x"]},
        {"image": "", "sentences": ["x"]},
        {"image": "%%% not base64 %%%", "sentences": ["x"]},
    ],
    ids=[
        "missing-image",
        "empty-sentences",
        "missing-sentences",
        "sentences-wrong-type",
        "bbox-wrong-arity",
        "bbox-negative-width",
        "bbox-zero-height",
        "empty-image-ref",
        "undecodable-image-ref",
    ],
)
def test_malformed_requests_are_400(client, body):
    if body.get("image") == "placeholder":
        body = dict(body, image=png_b64())
    response = client.post("/score", json=body)
    assert response.status_code == 400


def test_valid_base64_of_non_image_bytes_is_400(client):
    ref = base64.b64encode(b"definitely not a png").decode("ascii")
    response = client.post("/score", json={"image": ref, "sentences": ["x"]})
    assert response.status_code == 400


def test_broken_json_body_is_400(client):
    response = client.post(
        "/score", content=b"{broken", headers={"content-type": "application/json"}
    )
    assert response.status_code == 400


def test_backend_exception_is_500(client):
    failing = TestClient(create_app(FailingBackend()))
    response = failing.post("/score", json={"image": png_b64(), "sentences": ["x"]})
    assert response.status_code == 500
    assert response.json()["detail"].startswith("model failure")


def test_wrong_score_count_is_500(client):
    # FixedBackend always returns three scores; one sentence exposes it.
    response = client.post("/score", json={"image": png_b64(), "sentences": ["only one"]})
    assert response.status_code == 500


def test_non_finite_scores_are_500():
    class NanBackend:
        def score(self, image, sentences):
            return [float("nan")] * len(sentences)

    client = TestClient(create_app(NanBackend()))
    response = client.post("/score", json={"image": png_b64(), "sentences": ["x"]})
    assert response.status_code == 500


# --- invariants ---


@settings(max_examples=25, deadline=None)
@given(sentences=st.lists(st.text(min_size=1, max_size=30), min_size=1, max_size=8))
def test_score_count_always_matches_sentence_count(sentences):
    client = TestClient(create_app(EchoLengthBackend()))
    response = client.post("/score", json={"image": png_b64(), "sentences": sentences})
    assert response.status_code == 200
    assert len(response.json()["scores"]) == len(sentences)


# --- payload and image decoding units ---


def test_payload_coerces_bbox_to_tuple():
    payload = ScorePayload(image="x", sentences=["s"], bbox=[1, 2, 3, 4])
    assert payload.bbox == (1.0, 2.0, 3.0, 4.0)


def test_payload_rejects_zero_area_bbox():
    with pytest.raises(ValueError):
        ScorePayload(image="x", sentences=["s"], bbox=[0, 0, 0, 4])


def test_load_image_from_path(tmp_path):
    path = tmp_path / "img.png"
    Image.new("RGB", (8, 8), (9, 9, 9)).save(path)
    assert load_image(str(path)).size == (8, 8)


def test_load_image_from_base64():
    assert load_image(png_b64(size=(8, 8))).size == (8, 8)


@pytest.mark.parametrize("ref", ["", "/no/such/file.png", "!!!", "aGVsbG8="])
def test_load_image_rejects_garbage(ref):
    with pytest.raises(ValueError):
        load_image(ref)


# --- the real wire ---


def test_live_server_round_trip():
    """Same contract over an actual TCP socket, not the in-process client."""
    config = uvicorn.Config(
        create_app(FixedBackend()), host="127.0.0.1", port=0, log_level="warning"
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    try:
        deadline = time.monotonic() + 10
        while not server.started:
            if time.monotonic() > deadline:
                raise TimeoutError("server did not start")
            time.sleep(0.02)
        port = server.servers[0].sockets[0].getsockname()[1]
        base = f"http://127.0.0.1:{port}"
        health = httpx.get(f"{base}/health", timeout=5)
        assert health.status_code == 200
        assert health.content == b'{"status":"ok"}'
        scored = httpx.post(
            f"{base}/score",
            json={"image": png_b64(), "bbox": [4, 4, 16, 16], "sentences": ["a", "b", "c"]},
            timeout=5,
        )
        assert scored.status_code == 200
        assert scored.content == FROZEN_BODY
    finally:
        server.should_exit = True
        thread.join(timeout=5)
