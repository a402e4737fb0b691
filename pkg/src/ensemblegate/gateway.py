"""REST gateway: endpoints, bounded worker pool, and the serve CLI.

One ensemble is loaded at startup and shared read-only by every handler
thread; request handling is stateless, so responses are a pure function of
the request bytes.
"""

from __future__ import annotations

import argparse
import logging
import os
import signal
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from http.server import BaseHTTPRequestHandler, HTTPServer

from .ensemble import Ensemble, forward, load_ensemble, load_manifest_file
from .errors import (
    BadPolicy,
    BadRequest,
    BatchTooLarge,
    GatewayError,
    PolicyUnavailable,
    ShapeMismatch,
)
from .jsonio import dumps_canonical
from .policy import apply_policy, votes_from_output
from .wire import decode_request, render_prediction

logger = logging.getLogger(__name__)

DEFAULT_PORT = 8080
PORT_ENV = "ENSEMBLEGATE_PORT"
WORKERS_ENV = "ENSEMBLEGATE_WORKERS"
MANIFEST_ENV = "ENSEMBLEGATE_MANIFEST"

SHUTDOWN_DEADLINE_S = 5.0

MAX_BODY_BYTES = 1 << 30  # refuse absurd request bodies before reading them


def _error_body(code: str, message: str) -> bytes:
    return dumps_canonical({"error": code, "message": message})


def _status_for(exc: GatewayError) -> int:
    if isinstance(exc, BatchTooLarge):
        return 413
    if isinstance(exc, PolicyUnavailable):
        return 422
    if isinstance(exc, (BadRequest, BadPolicy, ShapeMismatch)):
        return 400
    return 500


class GatewayApp:
    """Routes (method, path, body) to a status and a canonical JSON body.

    Keeping this free of socket concerns makes every endpoint testable as a
    plain function call.
    """

    def __init__(self, ensemble: Ensemble | None = None):
        self._ensemble = ensemble

    @property
    def ensemble(self) -> Ensemble | None:
        return self._ensemble

    def set_ensemble(self, ensemble: Ensemble) -> None:
        self._ensemble = ensemble

    def handle(self, method: str, path: str, body: bytes = b"") -> tuple[int, bytes]:
        try:
            return self._route(method, path, body)
        except GatewayError as exc:
            status = _status_for(exc)
            if status >= 500:
                logger.exception("internal error handling %s %s", method, path)
                return status, _error_body("internal", "internal server error")
            return status, _error_body(exc.code, str(exc))
        except Exception:
            # never leak stack detail to the client
            logger.exception("unhandled error handling %s %s", method, path)
            return 500, _error_body("internal", "internal server error")

    def _route(self, method: str, path: str, body: bytes) -> tuple[int, bytes]:
        path = path.split("?", 1)[0]
        if path == "/healthz":
            if method != "GET":
                return 405, _error_body("method_not_allowed", f"{method} not allowed here")
            if self._ensemble is None:
                return 503, _error_body("loading", "ensemble is still loading")
            return 200, dumps_canonical({"status": "ok"})
        if path == "/v1/models":
            if method != "GET":
                return 405, _error_body("method_not_allowed", f"{method} not allowed here")
            return self._models()
        if path == "/v1/predict":
            if method != "POST":
                return 405, _error_body("method_not_allowed", f"{method} not allowed here")
            return self._predict(body)
        return 404, _error_body("not_found", f"no such endpoint: {path}")

    def _require_ensemble(self) -> Ensemble | None:
        return self._ensemble

    def _models(self) -> tuple[int, bytes]:
        ensemble = self._require_ensemble()
        if ensemble is None:
            return 503, _error_body("loading", "ensemble is still loading")
        listing = [
            {
                "id": m.id,
                "input_shape": list(m.input_shape.dims),
                "labels": list(m.labels),
                "parameter_bytes": m.parameter_bytes,
            }
            for m in ensemble.models
        ]
        body = {
            "models": listing,
            "bytes_used": ensemble.bytes_used,
            "memory_budget_bytes": ensemble.memory_budget_bytes,
            "max_batch": ensemble.max_batch,
            "binary_compatible": ensemble.binary_compatible,
        }
        return 200, dumps_canonical(body)

    def _predict(self, body: bytes) -> tuple[int, bytes]:
        ensemble = self._require_ensemble()
        if ensemble is None:
            return 503, _error_body("loading", "ensemble is still loading")
        batch, policy = decode_request(body, pixel_scale=ensemble.preprocess.pixel_scale)
        output = forward(ensemble, batch)
        combined = None
        if policy is not None:
            combined = apply_policy(policy, votes_from_output(output, ensemble))
        return 200, dumps_canonical(render_prediction(ensemble, output, combined))


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    timeout = 30.0

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PUT(self):
        self._dispatch("PUT")

    def do_DELETE(self):
        self._dispatch("DELETE")

    def do_PATCH(self):
        self._dispatch("PATCH")

    def do_HEAD(self):
        self._dispatch("HEAD")

    def _dispatch(self, method: str):
        body = b""
        if method == "POST":
            length_header = self.headers.get("Content-Length")
            if length_header is None:
                self._respond(400, _error_body("bad_request", "Content-Length required"))
                return
            try:
                length = int(length_header)
            except ValueError:
                self._respond(400, _error_body("bad_request", "bad Content-Length"))
                return
            if length < 0:
                self._respond(400, _error_body("bad_request", "bad Content-Length"))
                return
            if length > MAX_BODY_BYTES:
                self._respond(413, _error_body("batch_too_large", "request body too large"))
                return
            body = self.rfile.read(length) if length > 0 else b""
            if len(body) != length:
                self._respond(400, _error_body("bad_request", "truncated request body"))
                return
        status, payload = self.server.app.handle(method, self.path, body)  # type: ignore[attr-defined]
        self._respond(status, payload)

    def _respond(self, status: int, payload: bytes):
        try:
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.send_header("Connection", "close")
            self.end_headers()
            self.wfile.write(payload)
        except OSError:
            logger.debug("client went away while sending response", exc_info=True)
        self.close_connection = True

    def send_error(self, code, message=None, explain=None):
        # the stdlib version renders HTML; keep the wire JSON-only
        self._respond(int(code), _error_body("bad_request", message or "bad request"))

    def log_message(self, format, *args):
        logger.debug("%s - %s", self.address_string(), format % args)


class GatewayServer(HTTPServer):
    """HTTP server with a bounded pool of handler threads.

    The accept loop stays single-threaded; each accepted connection is handed
    to one of ``workers`` pool threads, all sharing the same read-only app.
    """

    request_queue_size = 128
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int], app: GatewayApp, workers: int):
        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")
        super().__init__(address, _Handler)
        self.app = app
        self.workers = workers
        self._pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="gateway")
        self._inflight = 0
        self._inflight_cv = threading.Condition()

    @property
    def port(self) -> int:
        return self.server_address[1]

    def process_request(self, request, client_address):
        with self._inflight_cv:
            self._inflight += 1
        try:
            self._pool.submit(self._handle_one, request, client_address)
        except RuntimeError:
            # pool already shut down; refuse politely
            with self._inflight_cv:
                self._inflight -= 1
                self._inflight_cv.notify_all()
            self.shutdown_request(request)

    def _handle_one(self, request, client_address):
        try:
            self.finish_request(request, client_address)
        except Exception:
            self.handle_error(request, client_address)
        finally:
            self.shutdown_request(request)
            with self._inflight_cv:
                self._inflight -= 1
                self._inflight_cv.notify_all()

    def handle_error(self, request, client_address):
        logger.debug("error while handling request from %s", client_address, exc_info=True)

    def drain(self, timeout: float = SHUTDOWN_DEADLINE_S) -> bool:
        """Wait for in-flight requests to finish; True if fully drained."""
        deadline = time.monotonic() + timeout
        with self._inflight_cv:
            while self._inflight > 0:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                self._inflight_cv.wait(remaining)
            drained = self._inflight == 0
        self._pool.shutdown(wait=False, cancel_futures=True)
        return drained


def serve(manifest_path: str, host: str = "0.0.0.0", port: int = DEFAULT_PORT,
          workers: int | None = None) -> int:
    """Load the manifest, bind the port, and serve until interrupted.

    The socket binds first and answers 503 while the ensemble loads, then
    flips healthy. Returns a process exit code; startup failures print a
    one-line diagnostic and return nonzero.
    """
    if workers is None:
        workers = os.cpu_count() or 1
    app = GatewayApp()
    try:
        server = GatewayServer((host, port), app, workers)
    except OSError as exc:
        print(f"ensemblegate: cannot bind {host}:{port}: {exc}", file=sys.stderr)
        return 1
    acceptor = threading.Thread(
        target=server.serve_forever, kwargs={"poll_interval": 0.1}, name="acceptor"
    )
    acceptor.start()
    try:
        ensemble = load_ensemble(load_manifest_file(manifest_path))
    except (OSError, GatewayError) as exc:
        print(f"ensemblegate: startup failed: {exc}", file=sys.stderr)
        server.shutdown()
        acceptor.join()
        server.server_close()
        return 1
    app.set_ensemble(ensemble)
    print(
        f"ensemblegate: listening on http://{host}:{server.port} "
        f"(models={ensemble.size}, bytes_used={ensemble.bytes_used}, workers={workers})",
        file=sys.stderr,
        flush=True,
    )

    previous_sigterm = None
    in_main_thread = threading.current_thread() is threading.main_thread()
    if in_main_thread:
        def _interrupt(signum, frame):
            raise KeyboardInterrupt
        previous_sigterm = signal.signal(signal.SIGTERM, _interrupt)
    try:
        while acceptor.is_alive():
            acceptor.join(timeout=0.2)
    except KeyboardInterrupt:
        print("ensemblegate: shutting down", file=sys.stderr, flush=True)
    finally:
        if in_main_thread:
            signal.signal(signal.SIGTERM, previous_sigterm)
        server.shutdown()
        acceptor.join()
        server.drain(SHUTDOWN_DEADLINE_S)
        server.server_close()
    return 0


def _int_from_env(name: str, fallback: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return fallback
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"ensemblegate: {name} must be an integer, got {raw!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ensemblegate",
        description="Serve an ensemble of LIN1 models behind a REST endpoint.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    serve_parser = sub.add_parser("serve", help="load a manifest and serve the endpoints")
    serve_parser.add_argument(
        "--manifest",
        default=os.environ.get(MANIFEST_ENV),
        help=f"manifest path (or set {MANIFEST_ENV})",
    )
    serve_parser.add_argument("--host", default="0.0.0.0")
    serve_parser.add_argument("--port", type=int, default=None,
                              help=f"default {PORT_ENV} or {DEFAULT_PORT}")
    serve_parser.add_argument("--workers", type=int, default=None,
                              help=f"default {WORKERS_ENV} or the logical core count")
    args = parser.parse_args(argv)
    if args.manifest is None:
        serve_parser.error(f"--manifest is required (or set {MANIFEST_ENV})")
    port = args.port if args.port is not None else _int_from_env(PORT_ENV, DEFAULT_PORT)
    workers = (
        args.workers
        if args.workers is not None
        else _int_from_env(WORKERS_ENV, os.cpu_count() or 1)
    )
    return serve(args.manifest, host=args.host, port=port, workers=workers)


if __name__ == "__main__":
    sys.exit(main())
