import json
import os
import shutil
import socketserver
import subprocess
import threading
from pathlib import Path

import cv2
import jsonschema
import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[2]
SCHEMAS = Path(os.environ.get("ENTROSEG_SCHEMAS", ROOT / "schemas"))


def _find_cli():
    env = os.environ.get("ENTROSEG_CLI")
    if env:
        return env
    for candidate in (ROOT / "build" / "entroseg", shutil.which("entroseg")):
        if candidate and Path(candidate).exists():
            return str(candidate)
    return None


@pytest.fixture(scope="session")
def cli():
    path = _find_cli()
    if path is None:
        pytest.skip("entroseg executable not built")
    return path


@pytest.fixture
def run(cli):
    def _run(*args, check=None):
        proc = subprocess.run([cli, *map(str, args)], capture_output=True, text=True, timeout=120)
        if check is not None:
            assert proc.returncode == check, proc.stderr
        return proc

    return _run


@pytest.fixture(scope="session")
def schema():
    def _load(name):
        return json.loads((SCHEMAS / f"{name}.schema.json").read_text())

    return _load


@pytest.fixture
def validate(schema):
    def _validate(doc, name):
        jsonschema.validate(doc, schema(name), cls=jsonschema.Draft202012Validator)

    return _validate


def text_scene(seed, size=256, words=("HELLO", "TEXT", "SCENE")):
    """Light cluttered background with dark glyph lines; returns (rgb uint8, truth boxes)."""
    rng = np.random.default_rng(seed)
    img = np.full((size, size, 3), 225, np.uint8)
    for _ in range(12):
        x, y = rng.integers(0, size, 2)
        r = int(rng.integers(4, 14))
        colour = tuple(int(c) for c in rng.integers(150, 255, 3))
        cv2.circle(img, (int(x), int(y)), r, colour, -1)
    truths = []
    y = 50
    for word in words:
        scale = 1.0
        (w, h), base = cv2.getTextSize(word, cv2.FONT_HERSHEY_SIMPLEX, scale, 2)
        x = int(rng.integers(10, max(11, size - w - 10)))
        cv2.rectangle(img, (x - 6, y - h - 6), (x + w + 6, y + base + 6), (240, 240, 240), -1)
        cv2.putText(img, word, (x, y), cv2.FONT_HERSHEY_SIMPLEX, scale, (20, 20, 20), 2, cv2.LINE_AA)
        truths.append((x, y - h, x + w, y + base))
        y += 70
    return img, truths


def write_png(path, rgb):
    if rgb.ndim == 3:
        rgb = cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR)
    assert cv2.imwrite(str(path), rgb)
    return path


def write_gt(path, truths):
    lines = [f'{x1},{y1},{x2},{y2},"w{i}"' for i, (x1, y1, x2, y2) in enumerate(truths)]
    path.write_text("\n".join(lines) + "\n")
    return path


class MockDetector:
    """Newline-delimited JSON detector answering from a script keyed by model prefix and segment id."""

    def __init__(self, script):
        self.script = script
        self.requests = []
        outer = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self):
                for line in self.rfile:
                    request = json.loads(line)
                    outer.requests.append(request)
                    model = request["request_id"].rsplit("-", 1)[0]
                    boxes = outer.script.get((model, request["meta"]["segment_id"]), [])
                    reply = {"request_id": request["request_id"], "model_id": model, "boxes": boxes}
                    self.wfile.write((json.dumps(reply) + "\n").encode())

        class Server(socketserver.ThreadingMixIn, socketserver.TCPServer):
            daemon_threads = True
            allow_reuse_address = True

        self.server = Server(("127.0.0.1", 0), Handler)
        self.port = self.server.server_address[1]
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()

    def spec(self, model, accuracy):
        return f"{model}=127.0.0.1:{self.port}@{accuracy}"


@pytest.fixture
def mock_detector():
    return MockDetector
