"""Shared builders: model documents, ensembles, live servers, HTTP helpers."""

from __future__ import annotations

import contextlib
import hashlib
import json
import threading
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from ensemblegate.ensemble import Ensemble, load_ensemble, load_manifest_file
from ensemblegate.fixtures import gen_manifest, gen_model
from ensemblegate.gateway import GatewayApp, GatewayServer
from ensemblegate.jsonio import dumps_canonical


def lin1_doc(
    model_id="m1",
    input_shape=(2,),
    labels=("absent", "present"),
    weights=((1.0, 0.0), (0.0, 1.0)),
    bias=(0.0, 0.0),
    **extra,
) -> dict:
    doc = {
        "format": "lin1",
        "id": model_id,
        "input_shape": list(input_shape),
        "labels": list(labels),
        "weights": [list(row) for row in weights],
        "bias": list(bias),
    }
    doc.update(extra)
    return doc


def doc_bytes(doc: dict) -> bytes:
    return json.dumps(doc).encode("utf-8")


def build_ensemble(
    tmp_path: Path,
    docs,
    budget=10_000_000,
    max_batch=64,
    mean=(0.0,),
    std=(1.0,),
    pixel_scale=255.0,
) -> Ensemble:
    """Write model docs plus a manifest under tmp_path and load the ensemble."""
    entries = []
    for i, doc in enumerate(docs):
        path = tmp_path / f"model_{i}_{doc['id']}.json"
        path.write_bytes(doc_bytes(doc))
        entries.append({"id": doc["id"], "path": path.name})
    manifest = {
        "memory_budget_bytes": budget,
        "max_batch": max_batch,
        "preprocess": {"mean": list(mean), "std": list(std), "pixel_scale": pixel_scale},
        "models": entries,
    }
    manifest_path = tmp_path / "manifest.json"
    manifest_path.write_bytes(json.dumps(manifest).encode("utf-8"))
    return load_ensemble(load_manifest_file(manifest_path))


def fixture_ensemble(tmp_path: Path, n_models: int, dim=6, max_batch=64,
                     classes="binary", seed0=100) -> Ensemble:
    """Generated-fixture ensemble: n_models LIN1 files from the deterministic generator."""
    paths = []
    for i in range(n_models):
        path = tmp_path / f"gen_{i}.json"
        path.write_bytes(gen_model(seed0 + i, (dim,), classes, f"gen{i}"))
        paths.append(path)
    manifest_path = tmp_path / "gen_manifest.json"
    manifest_path.write_bytes(
        gen_manifest(paths, budget=10_000_000, max_batch=max_batch, out_dir=tmp_path)
    )
    return load_ensemble(load_manifest_file(manifest_path))


@contextlib.contextmanager
def running_server(ensemble, workers=2):
    """In-process gateway on an OS-assigned port; yields the base URL."""
    app = GatewayApp(ensemble)
    server = GatewayServer(("127.0.0.1", 0), app, workers)
    thread = threading.Thread(
        target=server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True
    )
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.port}"
    finally:
        server.shutdown()
        thread.join(timeout=5)
        server.drain(5.0)
        server.server_close()


@pytest.fixture
def server_factory():
    with contextlib.ExitStack() as stack:
        def start(ensemble, workers=2):
            return stack.enter_context(running_server(ensemble, workers))
        yield start


def post(url: str, body: bytes, timeout=10.0) -> tuple[int, bytes]:
    request = urllib.request.Request(
        url, data=body, method="POST", headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            return response.status, response.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()


def get(url: str, timeout=10.0) -> tuple[int, bytes]:
    try:
        with urllib.request.urlopen(url, timeout=timeout) as response:
            return response.status, response.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()


class _EchoHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        doc = json.loads(self.rfile.read(length))
        samples = doc.get("samples", [])
        self.server.records.append(
            {
                "path": self.path,
                "batch_size": len(samples),
                "sample_digests": [
                    hashlib.md5(s.get("data", "").encode()).hexdigest()[:8] for s in samples
                ],
            }
        )
        if self.server.predict_status == 200:
            payload = dumps_canonical(
                {"_batch_size": len(samples), "probe": ["absent"] * len(samples)}
            )
        else:
            payload = dumps_canonical({"error": "induced", "message": "induced failure"})
        self._reply(self.server.predict_status, payload)

    def do_GET(self):
        payload = dumps_canonical(
            {
                "models": [
                    {
                        "id": "probe",
                        "input_shape": [2],
                        "labels": ["absent", "present"],
                        "parameter_bytes": 24,
                    }
                ],
                "bytes_used": 24,
                "memory_budget_bytes": 1000,
                "max_batch": 1024,
                "binary_compatible": True,
            }
        )
        self._reply(200, payload)

    def _reply(self, status, payload):
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, format, *args):
        pass


@contextlib.contextmanager
def recording_echo_server(predict_status=200):
    """Records request order, batch sizes, and per-sample payload digests."""
    server = ThreadingHTTPServer(("127.0.0.1", 0), _EchoHandler)
    server.records = []
    server.predict_status = predict_status
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}", server.records
    finally:
        server.shutdown()
        thread.join(timeout=5)
        server.server_close()
