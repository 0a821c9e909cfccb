"""Deterministic stand-in services for desk-scale runs.

Tiny HTTP servers that speak the chat / embedding / scoring wire formats
with fully deterministic behavior, so pipelines can run end-to-end with no
model access. Tests also use them to count requests and inject failures.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable

from .retrieval import tokenize

JsonHandler = Callable[[dict], dict]


class StubServer:
    """One-endpoint JSON-over-POST server running on a background thread."""

    def __init__(self, handler: JsonHandler):
        self.handler = handler
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        outer = self

        class _RequestHandler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length))
                with outer._lock:
                    outer.requests.append(payload)
                try:
                    body = outer.handler(payload)
                    status = 200
                except Exception as e:  # noqa: BLE001 - surface as HTTP 500
                    body = {"error": str(e)}
                    status = 500
                data = json.dumps(body).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), _RequestHandler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self._httpd.server_address[1]}"

    @property
    def request_count(self) -> int:
        return len(self.requests)

    def start(self) -> "StubServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self) -> "StubServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


# ---------------------------------------------------------------------------
# Embeddings: token-hash vectors, so cosine similarity tracks token overlap
# ---------------------------------------------------------------------------

def hash_embedding(text: str, dim: int = 32) -> list[float]:
    vec = [0.0] * dim
    for token in tokenize(text):
        h = int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "big")
        vec[h % dim] += 1.0
        vec[(h >> 16) % dim] += 0.25
    if not any(vec):
        vec[0] = 1.0  # keep vectors non-zero for punctuation-only inputs
    return vec


def embedding_handler(dim: int = 32) -> JsonHandler:
    def handle(payload: dict) -> dict:
        return {"data": [
            {"index": i, "embedding": hash_embedding(text, dim)}
            for i, text in enumerate(payload["input"])
        ]}
    return handle


def embedding_server(dim: int = 32) -> StubServer:
    return StubServer(embedding_handler(dim))


# ---------------------------------------------------------------------------
# Chat: canned scripts or a deterministic overlap-based classifier
# ---------------------------------------------------------------------------

def scripted_chat_handler(responses: list[str]) -> JsonHandler:
    """Return the given response bodies one by one, in request order."""
    remaining = list(responses)
    lock = threading.Lock()

    def handle(payload: dict) -> dict:
        with lock:
            if not remaining:
                raise RuntimeError("scripted chat service exhausted")
            content = remaining.pop(0)
        return {"choices": [{"message": {"content": content}}]}

    return handle


_SOURCE_LINE = re.compile(r"^- Source Sentence from Document 1: (.*)$", re.MULTILINE)
_CANDIDATE_LINE = re.compile(r"^(\d+): (.*)$", re.MULTILINE)
_PAIRWISE_TARGET = re.compile(r"^- Target Sentence from Document 2: (.*)$", re.MULTILINE)


def _related(source: str, target: str, min_overlap: int) -> bool:
    src = {t for t in tokenize(source) if len(t) >= 3}
    tgt = {t for t in tokenize(target) if len(t) >= 3}
    return len(src & tgt) >= min_overlap


def overlap_chat_handler(min_overlap: int = 2) -> JsonHandler:
    """Classify by token overlap with the source sentence.

    Handles pairwise, listwise, and whole-document classification prompts;
    the same input always yields the same decision.
    """
    def handle(payload: dict) -> dict:
        prompt = payload["messages"][-1]["content"]
        src_match = _SOURCE_LINE.search(prompt)
        source = src_match.group(1) if src_match else ""
        pair_match = _PAIRWISE_TARGET.search(prompt)
        if pair_match:
            content = json.dumps({"related": _related(source, pair_match.group(1), min_overlap)})
        else:
            decisions = {
                m.group(1): _related(source, m.group(2), min_overlap)
                for m in _CANDIDATE_LINE.finditer(prompt)
            }
            content = json.dumps(decisions)
        return {"choices": [{"message": {"content": content}}]}

    return handle


def chat_server(handler: JsonHandler | None = None) -> StubServer:
    return StubServer(handler or overlap_chat_handler())


# ---------------------------------------------------------------------------
# Subjectivity scoring
# ---------------------------------------------------------------------------

def scoring_handler(score_fn: Callable[[str], float] | None = None) -> JsonHandler:
    fn = score_fn or (lambda text: (len(tokenize(text)) % 5) / 5.0)

    def handle(payload: dict) -> dict:
        return {"scores": [fn(t) for t in payload["input"]]}

    return handle


def scoring_server(score_fn: Callable[[str], float] | None = None) -> StubServer:
    return StubServer(scoring_handler(score_fn))


def failing_handler(failures: int, then: JsonHandler) -> JsonHandler:
    """Fail the first ``failures`` requests, then delegate."""
    state = {"left": failures}
    lock = threading.Lock()

    def handle(payload: dict) -> dict:
        with lock:
            if state["left"] > 0:
                state["left"] -= 1
                raise RuntimeError("injected failure")
        return then(payload)

    return handle
