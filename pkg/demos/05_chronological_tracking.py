"""
Chronological tracking with flexible batches
============================================

A cheap camera takes a frame every few seconds; a client ships them to the
gateway in time-ordered windows and reads back a presence timeline. Batch
sizes are flexible, so the final short window is sent rather than dropped.
"""

import json
import tempfile
import threading
from pathlib import Path

import numpy as np

from ensemblegate import GatewayApp, GatewayServer, load_ensemble, load_manifest
from ensemblegate.flexctl import main as flexctl_main
from ensemblegate.pgm import write_pgm

workdir = Path(tempfile.mkdtemp(prefix="tracking_demo_"))

# A detector on 4x4 grayscale frames: the "present" row weights every pixel
# positively, so bright frames (the object in view) win against the bias.
model = {
    "format": "lin1",
    "id": "detector",
    "input_shape": [1, 4, 4],
    "labels": ["absent", "present"],
    "weights": [[0.0] * 16, [1.0] * 16],
    "bias": [2.0, 0.0],
}
(workdir / "detector.json").write_bytes(json.dumps(model).encode())
manifest = load_manifest(json.dumps({
    "memory_budget_bytes": 10_000,
    "max_batch": 16,
    "preprocess": {"mean": [0.0], "std": [1.0], "pixel_scale": 255.0},
    "models": [{"id": "detector", "path": "detector.json"}],
}).encode(), base_dir=workdir)

app = GatewayApp(load_ensemble(manifest))
server = GatewayServer(("127.0.0.1", 0), app, workers=2)
thread = threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.05})
thread.start()
endpoint = f"http://127.0.0.1:{server.port}"

# Seven frames: the object enters around frame 2 and leaves after frame 4.
frame_dir = workdir / "frames"
frame_dir.mkdir()
for i in range(7):
    bright = 255 if 2 <= i <= 4 else 8
    pixels = np.full((4, 4), bright, dtype=np.uint8)
    (frame_dir / f"frame_{i:03d}.pgm").write_bytes(write_pgm(pixels))
print(f"wrote 7 frames to {frame_dir}")

# Window size 3 over 7 frames: batches of 3, 3 and finally 1.
print("\nper-model timeline:")
flexctl_main(["track", "--endpoint", endpoint, "--frames", str(frame_dir), "--window", "3"])

print("\ncombined timeline under the maximum-sensitivity policy:")
flexctl_main(["track", "--endpoint", endpoint, "--frames", str(frame_dir),
              "--window", "3", "--policy", "any"])

server.shutdown()
thread.join()
server.drain()
server.server_close()
