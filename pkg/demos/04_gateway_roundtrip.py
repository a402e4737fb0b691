"""
The REST gateway: one endpoint, N answers
=========================================

The gateway exposes the ensemble at POST /v1/predict. Samples travel as
base64 payloads; the response maps every model id to a batch-ordered list
of labels. Responses are byte-deterministic: sorted keys, no whitespace.
"""

import json
import tempfile
import threading
import urllib.request
from pathlib import Path

from ensemblegate import (
    GatewayApp,
    GatewayServer,
    encode_request,
    f32le_sample,
    gen_manifest,
    gen_model,
    load_ensemble,
    load_manifest_file,
)

workdir = Path(tempfile.mkdtemp(prefix="gateway_demo_"))
paths = []
for i in range(2):
    path = workdir / f"model_{i}.json"
    path.write_bytes(gen_model(seed=70 + i, shape=(4,), classes="binary", model_id=f"m{i}"))
    paths.append(path)
manifest = workdir / "manifest.json"
manifest.write_bytes(gen_manifest(paths, budget=10_000, max_batch=32, out_dir=workdir))

# An in-process server on an OS-assigned port, with 4 handler threads
# sharing the one loaded ensemble.
app = GatewayApp(load_ensemble(load_manifest_file(manifest)))
server = GatewayServer(("127.0.0.1", 0), app, workers=4)
thread = threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.05})
thread.start()
base = f"http://127.0.0.1:{server.port}"
print(f"serving on {base}")


def call(method, path, body=None):
    request = urllib.request.Request(
        f"{base}{path}", data=body, method=method,
        headers={"Content-Type": "application/json"},
    )
    with urllib.request.urlopen(request, timeout=5) as response:
        return response.status, response.read()


status, payload = call("GET", "/healthz")
print(f"GET /healthz -> {status} {payload.decode()}")

status, payload = call("GET", "/v1/models")
print(f"GET /v1/models -> {status}")
print(json.dumps(json.loads(payload), indent=2, sort_keys=True))

# A 3-sample batch plus a server-side `any` combination. Note the reserved
# underscore keys sorting ahead of the model ids.
body = encode_request(
    [f32le_sample([0.9, 0.1, 0.2, 0.3], [4]),
     f32le_sample([0.0, 0.0, 0.0, 0.0], [4]),
     f32le_sample([-0.5, 0.5, -0.5, 0.5], [4])],
    policy={"kind": "any"},
)
status, payload = call("POST", "/v1/predict", body)
print(f"POST /v1/predict -> {status}")
print(f"raw bytes: {payload.decode()}")

# Identical request bytes always produce identical response bytes.
repeats = {call("POST", "/v1/predict", body)[1] for _ in range(20)}
print(f"20 repeats produced {len(repeats)} distinct response body(ies)")

server.shutdown()
thread.join()
server.drain()
server.server_close()
print("server drained and closed")
