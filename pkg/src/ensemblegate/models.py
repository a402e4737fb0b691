"""Sample batches, the LIN1 model format, preprocessing, and prediction.

LIN1 is a deliberately boring model format: a JSON document holding the
weights, bias and class labels of a linear classifier, so every served
prediction can be checked by hand with a dot product.
"""

from __future__ import annotations

import math
import re
import threading
from dataclasses import dataclass

import numpy as np

from .errors import MalformedModel, ShapeMismatch
from .jsonio import loads_strict

# Ids never start with "_": underscore keys are reserved in responses.
MODEL_ID_RE = re.compile(r"[A-Za-z0-9][A-Za-z0-9_.-]*")

BINARY_LABELS = ("absent", "present")

BYTES_PER_PARAMETER = 4  # float32 weights and biases

_MODEL_FIELDS = frozenset({"format", "id", "input_shape", "labels", "weights", "bias"})


@dataclass(frozen=True)
class InputShape:
    """Sample geometry: [D] for flat vectors or [C, H, W] for images."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(self.dims)
        if len(dims) not in (1, 3):
            raise ValueError(f"input shape needs 1 or 3 dims, got {len(dims)}")
        for d in dims:
            if isinstance(d, bool) or not isinstance(d, int) or d < 1:
                raise ValueError(f"input shape dims must be positive integers, got {dims!r}")
        object.__setattr__(self, "dims", dims)

    @property
    def flat_size(self) -> int:
        return math.prod(self.dims)

    @property
    def channels(self) -> int:
        return self.dims[0] if len(self.dims) == 3 else 1


def shape_from_json(value) -> InputShape:
    """Build an InputShape from a decoded JSON array; ValueError on misuse."""
    if not isinstance(value, list) or not value:
        raise ValueError("input_shape must be a non-empty array of integers")
    for d in value:
        if isinstance(d, bool) or not isinstance(d, int):
            raise ValueError(f"input_shape entries must be integers, got {d!r}")
    return InputShape(tuple(value))


@dataclass(frozen=True)
class SampleBatch:
    """A batch of B samples stored sample-major as a (B, D) float32 block."""

    shape: InputShape
    data: np.ndarray

    def __post_init__(self):
        try:
            arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float32))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"batch data must be numeric: {exc}") from exc
        if arr.ndim != 2:
            raise ValueError(f"batch data must be 2-D (B, D), got ndim={arr.ndim}")
        if arr.shape[1] != self.shape.flat_size:
            raise ValueError(
                f"batch row length {arr.shape[1]} does not match "
                f"shape {list(self.shape.dims)} (D={self.shape.flat_size})"
            )
        if arr.size and not np.isfinite(arr).all():
            raise ValueError("batch contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def batch_size(self) -> int:
        return int(self.data.shape[0])


@dataclass(frozen=True)
class PreprocessSpec:
    """Per-channel normalization (x - mean) / std, plus the integer-pixel divisor."""

    mean: tuple[float, ...] = (0.0,)
    std: tuple[float, ...] = (1.0,)
    pixel_scale: float = 255.0

    def __post_init__(self):
        mean = tuple(float(v) for v in self.mean)
        std = tuple(float(v) for v in self.std)
        scale = float(self.pixel_scale)
        if not mean or not std:
            raise ValueError("mean and std must be non-empty")
        if not all(math.isfinite(v) for v in mean + std):
            raise ValueError("mean and std entries must be finite")
        if any(v <= 0 for v in std):
            raise ValueError("std entries must be > 0")
        if not math.isfinite(scale) or scale <= 0:
            raise ValueError(f"pixel_scale must be a positive number, got {self.pixel_scale!r}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "pixel_scale", scale)


@dataclass(frozen=True)
class LinearModel:
    """A K-class linear classifier: argmax_k of weights[k] . x + bias[k]."""

    id: str
    input_shape: InputShape
    labels: tuple[str, ...]
    weights: np.ndarray  # (K, D) float32
    bias: np.ndarray  # (K,) float32

    def __post_init__(self):
        if not isinstance(self.id, str) or not MODEL_ID_RE.fullmatch(self.id):
            raise MalformedModel(f"bad model id {self.id!r} (must match {MODEL_ID_RE.pattern})")
        labels = tuple(self.labels)
        if len(labels) < 2:
            raise MalformedModel(f"need at least 2 class labels, got {len(labels)}")
        if any(not isinstance(label, str) or not label for label in labels):
            raise MalformedModel("labels must be non-empty strings")
        if len(set(labels)) != len(labels):
            raise MalformedModel(f"labels must be unique, got {list(labels)}")
        try:
            weights = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float32))
            bias = np.ascontiguousarray(np.asarray(self.bias, dtype=np.float32))
        except (TypeError, ValueError) as exc:
            raise MalformedModel(f"weights/bias must be numeric arrays: {exc}") from exc
        expected = (len(labels), self.input_shape.flat_size)
        if weights.shape != expected:
            raise MalformedModel(f"weights must be K x D = {expected}, got {weights.shape}")
        if bias.shape != (len(labels),):
            raise MalformedModel(f"bias must have length {len(labels)}, got {bias.shape}")
        if not np.isfinite(weights).all() or not np.isfinite(bias).all():
            raise MalformedModel("weights and bias must be finite")
        weights.setflags(write=False)
        bias.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)

    @property
    def num_classes(self) -> int:
        return len(self.labels)

    @property
    def parameter_bytes(self) -> int:
        k, d = self.weights.shape
        return BYTES_PER_PARAMETER * (k * d + k)

    @property
    def is_binary(self) -> bool:
        return self.labels == BINARY_LABELS


def _require_numbers(values, where: str):
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise MalformedModel(f"{where}: {v!r} is not a number")


def parse_model_file(data: bytes) -> LinearModel:
    """Parse a LIN1 JSON document into a validated LinearModel.

    Raises MalformedModel for any defect: syntax errors, unknown or missing
    fields, dimension mismatches, duplicate labels, or a bad id.
    """
    try:
        doc = loads_strict(data)
    except ValueError as exc:
        raise MalformedModel(f"unreadable model document: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedModel("model document must be a JSON object")
    unknown = sorted(set(doc) - _MODEL_FIELDS)
    if unknown:
        raise MalformedModel(f"unknown model fields: {unknown}")
    missing = sorted(_MODEL_FIELDS - set(doc))
    if missing:
        raise MalformedModel(f"missing model fields: {missing}")
    if doc["format"] != "lin1":
        raise MalformedModel(f"unsupported format {doc['format']!r}, expected 'lin1'")
    try:
        shape = shape_from_json(doc["input_shape"])
    except ValueError as exc:
        raise MalformedModel(str(exc)) from exc
    labels = doc["labels"]
    if not isinstance(labels, list):
        raise MalformedModel("labels must be an array")
    weights = doc["weights"]
    if not isinstance(weights, list) or not all(isinstance(row, list) for row in weights):
        raise MalformedModel("weights must be an array of arrays")
    if len(weights) != len(labels):
        raise MalformedModel(
            f"weights has {len(weights)} rows but there are {len(labels)} labels"
        )
    for i, row in enumerate(weights):
        if len(row) != shape.flat_size:
            raise MalformedModel(
                f"weights row {i} has length {len(row)}, expected D={shape.flat_size}"
            )
        _require_numbers(row, f"weights row {i}")
    bias = doc["bias"]
    if not isinstance(bias, list):
        raise MalformedModel("bias must be an array")
    _require_numbers(bias, "bias")
    return LinearModel(
        id=doc["id"],
        input_shape=shape,
        labels=tuple(labels),
        weights=np.asarray(weights, dtype=np.float32),
        bias=np.asarray(bias, dtype=np.float32),
    )


_preprocess_lock = threading.Lock()
_preprocess_calls = 0


def preprocess_call_count() -> int:
    """Process-wide count of preprocess() invocations (test instrumentation)."""
    return _preprocess_calls


def preprocess(raw: SampleBatch, spec: PreprocessSpec) -> SampleBatch:
    """Normalize a batch to (x - mean) / std with per-channel broadcast.

    One invocation serves every model in an ensemble; the call counter lets
    tests pin that down.
    """
    global _preprocess_calls
    with _preprocess_lock:
        _preprocess_calls += 1
    channels = raw.shape.channels
    for name, values in (("mean", spec.mean), ("std", spec.std)):
        if len(values) not in (1, channels):
            raise ShapeMismatch(
                f"{name} has {len(values)} entries; shape {list(raw.shape.dims)} "
                f"has {channels} channel(s)"
            )
    mean = np.asarray(spec.mean, dtype=np.float32).reshape(-1, 1)
    std = np.asarray(spec.std, dtype=np.float32).reshape(-1, 1)
    b = raw.data.shape[0]
    per_channel = raw.shape.flat_size // channels
    grouped = raw.data.reshape(b, channels, per_channel)
    normalized = ((grouped - mean) / std).reshape(b, raw.shape.flat_size)
    return SampleBatch(raw.shape, normalized)


def linear_predict(model: LinearModel, batch: SampleBatch) -> list[int]:
    """Predict the label index of each sample; ties go to the lowest index.

    Accumulation runs in float64 regardless of the float32 storage.
    """
    if batch.shape.flat_size != model.input_shape.flat_size:
        raise ShapeMismatch(
            f"model {model.id!r} expects D={model.input_shape.flat_size}, "
            f"batch has D={batch.shape.flat_size}"
        )
    # einsum with a fixed summation order keeps each sample's logits bitwise
    # identical whether it is evaluated alone or inside a larger batch
    logits = np.einsum(
        "bd,kd->bk", batch.data.astype(np.float64), model.weights.astype(np.float64)
    )
    logits += model.bias.astype(np.float64)
    return [int(k) for k in np.argmax(logits, axis=1)]
