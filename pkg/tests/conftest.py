import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from PIL import Image

from qask.core import DescriptionSet, EpisodeSpec


def make_image(directory, name: str, color=(200, 30, 30)) -> str:
    path = directory / f"{name}.png"
    Image.new("RGB", (4, 4), color).save(path)
    return str(path)


def make_descriptions(category: str = "bed") -> DescriptionSet:
    return DescriptionSet(
        category=category,
        cat_col=f"blue {category}",
        col_feat=f"blue patchwork {category}",
        ctx=f"{category} next to a wooden nightstand",
        col_ctx=f"blue {category} next to a wooden nightstand",
        col_ctx_feat=f"blue patchwork {category} near a wooden nightstand",
    )


def make_episode(directory, episode_id: str, n: int, category: str = "bed",
                 split: str = "test") -> EpisodeSpec:
    obs = tuple(
        make_image(directory, f"{episode_id}_obs{i}", (20 * (i + 1) % 255, 80, 120))
        for i in range(n)
    )
    return EpisodeSpec(
        id=episode_id,
        category=category,
        target_image=make_image(directory, f"{episode_id}_target", (10, 200, 10)),
        descriptions=make_descriptions(category),
        observations=obs,
        split=split,
    )


@pytest.fixture
def image_dir(tmp_path):
    d = tmp_path / "images"
    d.mkdir()
    return d


@pytest.fixture
def episode(image_dir):
    return make_episode(image_dir, "ep0", 5)


@pytest.fixture
def ten_episode_manifest(image_dir):
    lengths = [2, 3, 4, 5, 6, 7, 8, 9, 4, 5]  # mean 5.3 > 4
    return [make_episode(image_dir, f"ep{i}", n) for i, n in enumerate(lengths)]


class StubModelServer:
    """Minimal chat-completion endpoint for tests.

    `reply` is either a fixed string or a callable(body_dict, index) -> str.
    """

    def __init__(self, reply):
        self.reply = reply
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length))
                with outer._lock:
                    index = len(outer.requests)
                    outer.requests.append(body)
                content = outer.reply(body, index) if callable(outer.reply) else outer.reply
                payload = json.dumps(
                    {"choices": [{"message": {"content": content}}]}
                ).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}/v1/chat/completions"

    @property
    def request_count(self) -> int:
        with self._lock:
            return len(self.requests)

    def close(self):
        self._server.shutdown()
        self._server.server_close()


@pytest.fixture
def stub_server_factory():
    servers = []

    def factory(reply):
        server = StubModelServer(reply)
        servers.append(server)
        return server

    yield factory
    for server in servers:
        server.close()
