from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from credi.corpus import load_dataset

DATA = Path(__file__).parent / "data"

_acceptance: dict[str, str] = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "_acceptance", None)
    if marker is None:
        return
    failed = report.failed
    if report.when == "call" or failed:
        previous = _acceptance.get(marker)
        _acceptance[marker] = "FAIL" if failed or previous == "FAIL" else "PASS"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is not None:
        report._acceptance = mark.kwargs.get("criterion") or mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in _acceptance.items():
        terminalreporter.write_line(f"ACCEPTANCE {status}: {name}")


@pytest.fixture(scope="session")
def fixture50():
    return load_dataset(DATA / "fixture50.jsonl")


@pytest.fixture(scope="session")
def data_dir():
    return DATA


class StubServer:
    """Chat-completion and embedding stub; ``script`` holds canned (status, body) replies."""

    def __init__(self):
        self.script: list[tuple[int, dict | str]] = []
        self.default: tuple[int, dict | str] = (200, {"choices": [{"message": {"content": "ok"}}]})
        self.requests: list[dict] = []
        self.lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                with stub.lock:
                    stub.requests.append({"path": self.path, "body": body,
                                          "auth": self.headers.get("Authorization")})
                    status, reply = stub.script.pop(0) if stub.script else stub.default
                if callable(reply):
                    reply = reply(body)
                payload = (reply if isinstance(reply, str) else json.dumps(reply)).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.httpd.server_address[1]}"
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def stub_server():
    server = StubServer()
    yield server
    server.close()
