"""Prediction service exposing one oracle model over HTTP.

The service is the trusted side of the client/server split: it answers
``POST /predict`` with the target model's truncated classification and
nothing else -- no model identity, no server-side timing. The model's
simulated inference time is injected by sleeping before the response is
written, so a client's round-trip measurement carries the timing channel.

Request handling may be concurrent, but the predict+delay stage is a
single-flight critical section: one request's sleep never overlaps
another's measurement. Probe validation happens before the delay, so
error responses return immediately.

Wire protocol (HTTP/1.1, JSON, UTF-8):
  POST /predict {"probe_id": <int>} -> 200 {"top": [{"label": .., "prob": ..}, ...]}
      exactly top_n entries, probabilities non-increasing, floats printed
      with 9 significant digits; the payload for a given probe is
      byte-identical across requests.
  POST /predict with an out-of-range probe -> 400 {"error": "unknown_probe"}
  GET /health -> 200 {"status": "ok"}
"""

from __future__ import annotations

import json
import logging
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .core import LabelSpace
from .errors import BindFailure, LoggingDisabled
from .zoo import OracleModel, query_oracle, sample_latency

log = logging.getLogger("archprint.service")


def render_prediction(
    model: OracleModel, probe: int, top_n: int, label_space: LabelSpace
) -> bytes:
    """The canonical /predict payload: deterministic bytes per probe."""
    response = query_oracle(model, probe, top_n)
    parts = []
    for class_index, probability in response.entries:
        label = json.dumps(label_space.labels[class_index])
        parts.append('{"label":%s,"prob":%s}' % (label, format(probability, ".9g")))
    return ('{"top":[' + ",".join(parts) + "]}").encode("utf-8")


class PredictionService:
    """Serves one target model; start() binds, stop() shuts down."""

    def __init__(
        self,
        model: OracleModel,
        label_space: LabelSpace,
        top_n: int,
        host: str = "127.0.0.1",
        port: int = 0,
        net_delay_ns: int = 0,
        latency_rng: np.random.Generator | None = None,
        log_requests: bool = False,
        log_path: str | Path | None = None,
    ):
        if not 1 <= top_n <= label_space.size:
            raise ValueError(f"top_n must be in [1, {label_space.size}]")
        if net_delay_ns < 0:
            raise ValueError("net_delay_ns must be non-negative")
        self._model = model
        self._label_space = label_space
        self._top_n = top_n
        self._net_delay_ns = net_delay_ns
        self._rng = latency_rng if latency_rng is not None else np.random.default_rng()
        self._predict_lock = threading.Lock()
        self._log_lock = threading.Lock()
        self._log_enabled = log_requests or log_path is not None
        self._log: list[tuple[int, int]] = []
        self._log_file = open(log_path, "a", encoding="utf-8") if log_path else None
        # Payload cache keeps repeated queries byte-identical and cheap.
        self._payloads: dict[int, bytes] = {}
        self._host = host
        self._port = port
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        if self._server is None:
            raise RuntimeError("service not started")
        return self._server.server_address[0], self._server.server_address[1]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def request_log(self) -> list[tuple[int, int]]:
        """Ordered (probe_id, receive_ns) pairs, one per prediction request."""
        if not self._log_enabled:
            raise LoggingDisabled("request logging is not enabled")
        with self._log_lock:
            return list(self._log)

    def _record(self, probe: int) -> None:
        if not self._log_enabled:
            return
        stamp = time.monotonic_ns()
        with self._log_lock:
            self._log.append((probe, stamp))
            if self._log_file is not None:
                self._log_file.write(
                    json.dumps({"probe_id": probe, "recv_ns": stamp}) + "\n"
                )
                self._log_file.flush()

    def _payload_for(self, probe: int) -> bytes:
        cached = self._payloads.get(probe)
        if cached is None:
            cached = render_prediction(
                self._model, probe, self._top_n, self._label_space
            )
            self._payloads[probe] = cached
        return cached

    def _predict(self, probe: int) -> bytes:
        # Validation (and its error response) precedes any injected delay.
        payload = self._payload_for(probe)
        with self._predict_lock:
            delay_ns = sample_latency(self._model, self._rng) + self._net_delay_ns
            time.sleep(delay_ns / 1e9)
        return payload

    def start(self) -> "PredictionService":
        service = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):  # route through logging, not stderr
                log.debug("%s %s", self.address_string(), fmt % args)

            def _send(self, status: int, body: bytes) -> None:
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                if self.path == "/health":
                    self._send(200, b'{"status":"ok"}')
                else:
                    self._send(404, b'{"error":"not_found"}')

            def do_POST(self):
                if self.path != "/predict":
                    self._send(404, b'{"error":"not_found"}')
                    return
                try:
                    length = int(self.headers.get("Content-Length", "0"))
                    document = json.loads(self.rfile.read(length).decode("utf-8"))
                    probe = document["probe_id"]
                    if isinstance(probe, bool) or not isinstance(probe, int):
                        raise TypeError("probe_id must be an integer")
                except (ValueError, KeyError, TypeError, UnicodeDecodeError):
                    self._send(400, b'{"error":"bad_request"}')
                    return
                service._record(probe)
                if not 0 <= probe < service._model.n_probes:
                    self._send(400, b'{"error":"unknown_probe"}')
                    return
                self._send(200, service._predict(probe))

        try:
            self._server = ThreadingHTTPServer((self._host, self._port), Handler)
        except OSError as exc:
            raise BindFailure(f"cannot bind {self._host}:{self._port}: {exc}") from exc
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        log.info("serving model %s on %s", self._model.id, self.url)
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
        if self._log_file is not None:
            self._log_file.close()
            self._log_file = None

    def wait(self) -> None:
        """Block until the server thread exits (or the caller is interrupted)."""
        if self._thread is not None:
            self._thread.join()

    def __enter__(self) -> "PredictionService":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()
