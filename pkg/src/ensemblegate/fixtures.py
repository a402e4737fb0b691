"""Deterministic LIN1 fixture generation.

Weights come from SplitMix64, a tiny 64-bit mixing generator, mapped onto a
24-bit grid so every value is exact in float32 and survives a JSON round
trip unchanged: value = (next_u64 >> 40) / 2**23 - 1, in [-1, 1). Identical
seeds therefore yield byte-identical files on every platform.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterator

from . import models as model_core
from .models import InputShape

_MASK64 = (1 << 64) - 1


def splitmix64(seed: int) -> Iterator[int]:
    """Yield the infinite SplitMix64 stream for a seed (values in [0, 2^64))."""
    state = seed & _MASK64
    while True:
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        yield z ^ (z >> 31)


def unit_floats(seed: int) -> Iterator[float]:
    """Floats in [0, 1) on a 2^-24 grid; exact in float32."""
    for z in splitmix64(seed):
        yield (z >> 40) / float(1 << 24)


def symmetric_floats(seed: int) -> Iterator[float]:
    """Floats in [-1, 1) on a 2^-23 grid; exact in float32."""
    for z in splitmix64(seed):
        yield (z >> 40) / float(1 << 23) - 1.0


def gen_model(seed: int, shape, classes: int | str, model_id: str) -> bytes:
    """Render a LIN1 document as canonical bytes.

    ``classes`` is either a class count K >= 2 or the string "binary", which
    pins the labels to ["absent", "present"]. Output is a pure function of
    (seed, shape, classes, model_id).
    """
    if not isinstance(shape, InputShape):
        shape = InputShape(tuple(shape))
    if classes == "binary":
        labels = list(model_core.BINARY_LABELS)
    else:
        if isinstance(classes, bool) or not isinstance(classes, int) or classes < 2:
            raise ValueError(f"classes must be an integer >= 2 or 'binary', got {classes!r}")
        labels = [f"class_{i}" for i in range(classes)]
    k, d = len(labels), shape.flat_size
    stream = symmetric_floats(seed)
    weights = [[next(stream) for _ in range(d)] for _ in range(k)]
    bias = [next(stream) for _ in range(k)]
    doc = {
        "format": "lin1",
        "id": model_id,
        "input_shape": list(shape.dims),
        "labels": labels,
        "weights": weights,
        "bias": bias,
    }
    data = (json.dumps(doc, separators=(",", ":")) + "\n").encode("utf-8")
    model_core.parse_model_file(data)  # self-check: emitted fixtures always parse
    return data


def gen_manifest(
    model_paths,
    budget: int,
    max_batch: int,
    out_dir,
    mean=(0.0,),
    std=(1.0,),
    pixel_scale: float = 255.0,
) -> bytes:
    """Render a manifest document pointing at existing LIN1 files.

    Ids are read from the model files themselves; paths are stored relative
    to ``out_dir`` (where the manifest will live).
    """
    out_dir = Path(out_dir)
    entries = []
    for path in model_paths:
        path = Path(path)
        model = model_core.parse_model_file(path.read_bytes())
        entries.append({"id": model.id, "path": os.path.relpath(path, out_dir)})
    doc = {
        "memory_budget_bytes": budget,
        "max_batch": max_batch,
        "preprocess": {"mean": list(mean), "std": list(std), "pixel_scale": pixel_scale},
        "models": entries,
    }
    return (json.dumps(doc, indent=2) + "\n").encode("utf-8")
