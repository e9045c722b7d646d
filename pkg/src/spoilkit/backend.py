"""HTTP client for remote scorer and completion backends.

The wire protocol is two JSON-over-POST endpoints:

    POST /v1/score    {"model": str, "text": str}        -> {"score": float in [0,1]}
    POST /v1/complete {"prompt": str, "max_tokens": int} -> {"text": str}

Transient failures (connection errors, timeouts, 5xx) are retried with
exponential backoff; protocol violations (malformed bodies, out-of-range
scores, other non-2xx statuses) are not.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass
from typing import Protocol

import requests

logger = logging.getLogger(__name__)


class BackendError(RuntimeError):
    """Base class for remote-backend failures."""


class BackendTransportError(BackendError):
    """The backend could not be reached (timeout, refused connection, 5xx)."""


class BackendProtocolError(BackendError):
    """The backend answered, but not with a valid response."""


class CompletionBackend(Protocol):
    def complete(self, prompt: str, max_tokens: int) -> str:
        ...


@dataclass
class BackendSettings:
    base_url: str
    timeout: float = 10.0
    max_retries: int = 2
    backoff_base: float = 0.5
    max_in_flight: int = 4


class BackendClient:
    """Thread-safe client for the score/complete protocol."""

    def __init__(self, settings: BackendSettings):
        self.settings = settings
        self._session = requests.Session()
        self._slots = threading.Semaphore(settings.max_in_flight)

    def _post(self, path: str, payload: dict) -> dict:
        url = self.settings.base_url.rstrip("/") + path
        last_error: Exception | None = None
        for attempt in range(self.settings.max_retries + 1):
            if attempt:
                delay = self.settings.backoff_base * 2 ** (attempt - 1)
                logger.warning("retrying %s (attempt %d) after %.2fs", path, attempt + 1, delay)
                time.sleep(delay)
            try:
                with self._slots:
                    response = self._session.post(url, json=payload,
                                                  timeout=self.settings.timeout)
            except requests.exceptions.Timeout as exc:
                last_error = BackendTransportError(f"timeout calling {path}: {exc}")
                continue
            except requests.exceptions.ConnectionError as exc:
                last_error = BackendTransportError(f"connection failed for {path}: {exc}")
                continue
            if 500 <= response.status_code < 600:
                last_error = BackendTransportError(
                    f"{path} returned HTTP {response.status_code}"
                )
                continue
            if not 200 <= response.status_code < 300:
                raise BackendProtocolError(f"{path} returned HTTP {response.status_code}")
            try:
                body = response.json()
            except ValueError as exc:
                raise BackendProtocolError(f"{path} returned a malformed body: {exc}") from exc
            if not isinstance(body, dict):
                raise BackendProtocolError(f"{path} returned a non-object body")
            if attempt:
                logger.info("%s succeeded after %d retries", path, attempt)
            return body
        raise last_error  # type: ignore[misc]

    def score(self, model: str, text: str) -> float:
        body = self._post("/v1/score", {"model": model, "text": text})
        value = body.get("score")
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise BackendProtocolError(f"/v1/score returned a non-numeric score: {value!r}")
        if not 0.0 <= value <= 1.0:
            raise BackendProtocolError(f"/v1/score returned an out-of-range score: {value}")
        return float(value)

    def complete(self, prompt: str, max_tokens: int) -> str:
        body = self._post("/v1/complete", {"prompt": prompt, "max_tokens": max_tokens})
        text = body.get("text")
        if not isinstance(text, str):
            raise BackendProtocolError(f"/v1/complete returned a non-string text: {text!r}")
        return text


class RemoteBinaryScorer:
    """BinaryScorer adapter binding a client to one named remote model."""

    def __init__(self, client: BackendClient, model: str):
        self._client = client
        self.model = model

    def score(self, text: str) -> float:
        return self._client.score(self.model, text)
