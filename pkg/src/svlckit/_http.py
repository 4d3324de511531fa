"""Shared JSON-over-HTTP plumbing for the generation service clients."""

from __future__ import annotations

import threading
import time

import requests

from .errors import ServiceError

DEFAULT_ATTEMPTS = 3
DEFAULT_BACKOFF = 0.5
DEFAULT_TIMEOUT = 30.0
DEFAULT_MAX_IN_FLIGHT = 8


class JsonServiceClient:
    """POSTs JSON payloads with bounded retries, backoff and in-flight cap.

    Transient transport failures (connection errors, timeouts, 5xx) are
    retried ``attempts`` times with exponential backoff, then surfaced as
    :class:`ServiceError` so batch pipelines can skip the record instead
    of dying.
    """

    def __init__(
        self,
        endpoint: str,
        attempts: int = DEFAULT_ATTEMPTS,
        backoff: float = DEFAULT_BACKOFF,
        timeout: float = DEFAULT_TIMEOUT,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        session: requests.Session | None = None,
    ) -> None:
        if attempts < 1:
            raise ValueError("attempts must be >= 1")
        self.endpoint = endpoint.rstrip("/")
        self.attempts = attempts
        self.backoff = backoff
        self.timeout = timeout
        self._gate = threading.Semaphore(max_in_flight)
        self._session = session or requests.Session()

    def post(self, path: str, payload: dict) -> dict:
        url = self.endpoint + path
        last_error: Exception | None = None
        for attempt in range(self.attempts):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                with self._gate:
                    response = self._session.post(url, json=payload, timeout=self.timeout)
                if response.status_code >= 500:
                    last_error = ServiceError(f"{url} returned {response.status_code}")
                    continue
                response.raise_for_status()
                body = response.json()
                if not isinstance(body, dict):
                    raise ServiceError(f"{url} returned non-object JSON")
                return body
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = exc
            except requests.HTTPError as exc:
                raise ServiceError(f"{url} rejected request: {exc}") from exc
            except ValueError as exc:  # undecodable JSON body
                raise ServiceError(f"{url} returned invalid JSON: {exc}") from exc
        raise ServiceError(f"{url} unreachable after {self.attempts} attempts: {last_error}")
