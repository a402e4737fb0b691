"""
Ensembles: one budget-accounted pool, one forward call
======================================================

A manifest lists the models, a memory budget, a batch-size ceiling, and the
single preprocessing transform shared by every model. Loading is all or
nothing: if the parameters do not fit the budget, nothing is served.
"""

import tempfile
from pathlib import Path

import numpy as np

from ensemblegate import (
    BudgetExceeded,
    InputShape,
    SampleBatch,
    forward,
    gen_manifest,
    gen_model,
    load_ensemble,
    load_manifest_file,
    preprocess_call_count,
)

workdir = Path(tempfile.mkdtemp(prefix="ensemble_demo_"))

# Three deterministic fixture models on 8-dimensional inputs. Each one costs
# 4 * (K*D + K) bytes: here 4 * (2*8 + 2) = 72 bytes.
paths = []
for i in range(3):
    path = workdir / f"model_{i}.json"
    path.write_bytes(gen_model(seed=40 + i, shape=(8,), classes="binary", model_id=f"m{i}"))
    paths.append(path)

manifest_path = workdir / "manifest.json"
manifest_path.write_bytes(gen_manifest(paths, budget=216, max_batch=64, out_dir=workdir))
ensemble = load_ensemble(load_manifest_file(manifest_path))
print(f"loaded {ensemble.size} models, bytes_used={ensemble.bytes_used} "
      f"of budget {ensemble.memory_budget_bytes}")

# One byte less and the whole ensemble is refused:
tight = workdir / "tight.json"
tight.write_bytes(gen_manifest(paths, budget=215, max_batch=64, out_dir=workdir))
try:
    load_ensemble(load_manifest_file(tight))
except BudgetExceeded as exc:
    print(f"budget boundary enforced: {exc}")

# The forward pass preprocesses the batch once and runs every model on the
# result, whatever the batch size.
rng = np.random.default_rng(0)
for batch_size in (1, 5, 33):
    batch = SampleBatch(InputShape((8,)), rng.normal(size=(batch_size, 8)).astype(np.float32))
    calls_before = preprocess_call_count()
    output = forward(ensemble, batch)
    print(f"B={batch_size:3d}: per-model output lengths "
          f"{[len(row) for row in output.per_model]}, "
          f"preprocess invocations: {preprocess_call_count() - calls_before}")
