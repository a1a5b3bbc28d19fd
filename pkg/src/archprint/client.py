"""The attacker's only window onto a target model.

Two session flavours share one surface:

* ``RemoteSession`` speaks the prediction service's HTTP protocol over a
  kept-alive connection and measures real round-trip time on the
  monotonic nanosecond clock.
* ``InProcessSession`` wraps an oracle model directly and reports the
  model's sampled inference time as the measurement, which makes
  desk-scale campaigns deterministic.

Sessions are single-threaded by contract: timing measurements require
strictly sequential queries. Every prediction request sent increments the
session's budget counter, mirroring what the service's request log sees.
"""

from __future__ import annotations

import http.client
import json
import time
from dataclasses import dataclass
from urllib.parse import urlparse

import numpy as np

from .core import LabelSpace, TopNResponse
from .errors import ProtocolError, RemoteError, TransportError
from .zoo import OracleModel, query_oracle, sample_latency


@dataclass(frozen=True)
class MeasuredResponse:
    """One prediction outcome as the adversary sees it."""

    response: TopNResponse
    latency_ns: int
    sequence: int


class InProcessSession:
    """Oracle adapter for simulated targets; latency is sampled, not slept."""

    def __init__(self, model: OracleModel, top_n: int, rng: np.random.Generator):
        self._model = model
        self._top_n = top_n
        self._rng = rng
        self._sequence = 0

    @property
    def queries_sent(self) -> int:
        return self._sequence

    def query(self, probe: int) -> MeasuredResponse:
        response = query_oracle(self._model, probe, self._top_n)
        latency = sample_latency(self._model, self._rng)
        measured = MeasuredResponse(response, latency, self._sequence)
        self._sequence += 1
        return measured

    def measure_latency(self, probe: int = 0, repetitions: int = 10) -> list[int]:
        if repetitions < 1:
            raise ValueError("repetitions must be positive")
        return [self.query(probe).latency_ns for _ in range(repetitions)]

    def respond(self, probe: int, top_n: int | None = None) -> TopNResponse:
        return self.query(probe).response

    def close(self) -> None:
        pass


class RemoteSession:
    """HTTP client for the prediction service; keep-alive, monotonic timing.

    The session needs the task's label space to map the wire's label
    strings back to class indices (the class list of the underlying task
    is public knowledge; which model answers is not).
    """

    def __init__(self, url: str, label_space: LabelSpace, timeout: float = 30.0):
        parsed = urlparse(url if "//" in url else f"http://{url}")
        if parsed.hostname is None or parsed.port is None:
            raise ValueError(f"need host:port in service url, got {url!r}")
        self._label_space = label_space
        self._connection = http.client.HTTPConnection(
            parsed.hostname, parsed.port, timeout=timeout
        )
        self._sequence = 0
        # connect eagerly so TCP setup never lands inside a timing sample
        try:
            self._connection.connect()
        except OSError as exc:
            raise TransportError(f"cannot reach service at {url}: {exc}") from exc

    @property
    def queries_sent(self) -> int:
        return self._sequence

    def query(self, probe: int) -> MeasuredResponse:
        body = json.dumps({"probe_id": int(probe)}).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        sequence = self._sequence
        try:
            started = time.perf_counter_ns()
            self._connection.request("POST", "/predict", body=body, headers=headers)
            http_response = self._connection.getresponse()
            payload = http_response.read()
            elapsed = time.perf_counter_ns() - started
        except (OSError, http.client.HTTPException) as exc:
            self._sequence += 1
            self._connection.close()
            raise TransportError(f"prediction request failed: {exc}") from exc
        self._sequence += 1
        return MeasuredResponse(
            self._parse(http_response.status, payload), max(elapsed, 1), sequence
        )

    def _parse(self, status: int, payload: bytes) -> TopNResponse:
        try:
            document = json.loads(payload.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"unparseable payload: {payload[:200]!r}") from exc
        if status != 200:
            code = document.get("error") if isinstance(document, dict) else None
            raise RemoteError(code if isinstance(code, str) else f"http_{status}")
        if not isinstance(document, dict) or "top" not in document:
            raise ProtocolError(f"payload missing 'top': {document!r}")
        entries = []
        for item in document["top"]:
            try:
                index = self._label_space.index_of(item["label"])
                entries.append((index, float(item["prob"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(f"malformed entry {item!r}") from exc
        try:
            return TopNResponse(tuple(entries))
        except ValueError as exc:
            raise ProtocolError(f"invalid response vector: {exc}") from exc

    def measure_latency(self, probe: int = 0, repetitions: int = 10) -> list[int]:
        """Round-trip times of ``repetitions`` sequential queries of one probe."""
        if repetitions < 1:
            raise ValueError("repetitions must be positive")
        return [self.query(probe).latency_ns for _ in range(repetitions)]

    def respond(self, probe: int, top_n: int | None = None) -> TopNResponse:
        return self.query(probe).response

    def health(self) -> bool:
        try:
            self._connection.request("GET", "/health")
            response = self._connection.getresponse()
            payload = response.read()
        except (OSError, http.client.HTTPException) as exc:
            self._connection.close()
            raise TransportError(f"health check failed: {exc}") from exc
        return response.status == 200 and json.loads(payload).get("status") == "ok"

    def close(self) -> None:
        self._connection.close()

    def __enter__(self) -> "RemoteSession":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
