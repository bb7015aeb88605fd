import socket
import threading
import time

import numpy as np
import pytest
import uvicorn
from PIL import Image as PILImage


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class LiveServer:
    """uvicorn in a background thread, bound to a free local port."""

    def __init__(self, app):
        self.port = free_port()
        config = uvicorn.Config(app, host="127.0.0.1", port=self.port,
                                log_level="error")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    def __enter__(self) -> str:
        self.thread.start()
        deadline = time.time() + 20
        while not self.server.started:
            if time.time() > deadline:
                raise RuntimeError("server did not start in time")
            time.sleep(0.02)
        return f"http://127.0.0.1:{self.port}"

    def __exit__(self, *exc):
        self.server.should_exit = True
        self.thread.join(timeout=10)


@pytest.fixture
def live_server():
    servers = []

    def start(app) -> str:
        server = LiveServer(app)
        servers.append(server)
        return server.__enter__()

    yield start
    for server in servers:
        server.__exit__()


@pytest.fixture
def tmp_png(tmp_path):
    def write(name, array):
        arr = np.asarray(array, dtype=np.float64)
        data = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
        path = tmp_path / name
        PILImage.fromarray(data, mode="RGB").save(path, format="PNG")
        return path

    return write
