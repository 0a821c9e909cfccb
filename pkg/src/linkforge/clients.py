"""Thin clients for the external model services.

All model inference is delegated to HTTP endpoints; nothing neural runs
in-process. Wire formats:

  chat       POST {model, messages, temperature, top_p, response_format}
             -> {choices: [{message: {content}}]}
  embedding  POST {model, input: [text, ...]}
             -> {data: [{index, embedding}, ...]}  (index-aligned)
  scoring    POST {input: [text, ...]} -> {scores: [float, ...]}
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from pathlib import Path

import requests

from .errors import IntegrityError, TransportError

log = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.3
DEFAULT_TOP_P = 0.9


def _post_json(url: str, payload: dict, timeout: float, retries: int,
               backoff: float) -> dict:
    last_error: Exception | None = None
    for attempt in range(retries + 1):
        try:
            resp = requests.post(url, json=payload, timeout=timeout)
            resp.raise_for_status()
            return resp.json()
        except (requests.RequestException, ValueError) as e:
            last_error = e
            if attempt < retries:
                log.warning("request to %s failed (%s), retrying", url, e)
                if backoff:
                    time.sleep(backoff * (attempt + 1))
    raise TransportError(f"service at {url} failed after {retries + 1} attempts: {last_error}")


class ChatClient:
    """Client for an OpenAI-style chat completion endpoint."""

    def __init__(self, url: str, model: str, temperature: float = DEFAULT_TEMPERATURE,
                 top_p: float = DEFAULT_TOP_P, timeout: float = 120.0,
                 retries: int = 2, backoff: float = 0.5):
        self.url = url
        self.model = model
        self.temperature = temperature
        self.top_p = top_p
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def complete(self, messages: list[dict], structured: bool = True) -> str:
        payload = {
            "model": self.model,
            "messages": messages,
            "temperature": self.temperature,
            "top_p": self.top_p,
        }
        if structured:
            payload["response_format"] = "json_object"
        body = _post_json(self.url, payload, self.timeout, self.retries, self.backoff)
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as e:
            raise IntegrityError(f"chat response missing choices[0].message.content: {body!r}") from e


class EmbeddingClient:
    """Client for an embedding endpoint.

    ``max_chars`` truncates over-long inputs at the service's limit; every
    truncation is logged.
    """

    def __init__(self, url: str, model: str, timeout: float = 120.0,
                 retries: int = 2, backoff: float = 0.5,
                 max_chars: int | None = None):
        self.url = url
        self.model = model
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.max_chars = max_chars

    def embed(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            return []
        inputs = []
        for t in texts:
            if self.max_chars is not None and len(t) > self.max_chars:
                log.warning("truncating %d-char text to %d chars for embedding",
                            len(t), self.max_chars)
                t = t[: self.max_chars]
            inputs.append(t)
        payload = {"model": self.model, "input": inputs}
        body = _post_json(self.url, payload, self.timeout, self.retries, self.backoff)
        data = body.get("data")
        if not isinstance(data, list) or len(data) != len(inputs):
            raise IntegrityError(
                f"embedding response has {len(data) if isinstance(data, list) else 'no'} "
                f"items for {len(inputs)} inputs"
            )
        out: list[list[float] | None] = [None] * len(inputs)
        for item in data:
            idx = item["index"]
            if not (0 <= idx < len(inputs)) or out[idx] is not None:
                raise IntegrityError(f"embedding response index {idx} invalid or duplicated")
            out[idx] = [float(x) for x in item["embedding"]]
        return out  # type: ignore[return-value]


class SubjectivityClient:
    """Client for a sentence-level subjectivity scoring endpoint."""

    def __init__(self, url: str, timeout: float = 60.0, retries: int = 1,
                 backoff: float = 0.5):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def score(self, texts: list[str]) -> list[float]:
        if not texts:
            return []
        body = _post_json(self.url, {"input": texts}, self.timeout, self.retries, self.backoff)
        scores = body.get("scores")
        if not isinstance(scores, list) or len(scores) != len(texts):
            raise IntegrityError("scoring response misaligned with inputs")
        return [float(s) for s in scores]


class EmbeddingCache:
    """Disk cache of embeddings keyed by (model name, content hash).

    One file per key; writes go through a temp file + rename so concurrent
    readers never see partial entries.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, model: str, text: str) -> Path:
        digest = hashlib.sha256(f"{model}\x00{text}".encode("utf-8")).hexdigest()
        return self.directory / f"{digest}.json"

    def get(self, model: str, text: str) -> list[float] | None:
        path = self._path(model, text)
        try:
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)
        except FileNotFoundError:
            return None
        except json.JSONDecodeError:
            log.warning("dropping corrupt cache entry %s", path)
            return None

    def put(self, model: str, text: str, vector: list[float]) -> None:
        path = self._path(model, text)
        tmp = path.with_suffix(f".tmp.{os.getpid()}")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(vector, fh)
        os.replace(tmp, path)
