"""The /v1/predict wire protocol: request decoding and response rendering.

Samples travel as base64 payloads in one of two encodings:

* ``f32le`` -- little-endian 32-bit floats, with an explicit ``shape``;
* ``pgm``   -- a binary "P5" grayscale image; pixels are divided by the
  ensemble's pixel_scale and the shape becomes [1, H, W].
"""

from __future__ import annotations

import base64
import binascii

import numpy as np

from .ensemble import Ensemble, EnsembleOutput
from .errors import BadRequest
from .jsonio import dumps_canonical, loads_strict
from .models import BINARY_LABELS, InputShape, SampleBatch, shape_from_json
from .pgm import parse_pgm
from .policy import SensitivityPolicy, parse_policy

_REQUEST_FIELDS = frozenset({"samples", "policy"})
_F32LE_FIELDS = frozenset({"encoding", "shape", "data"})
_PGM_FIELDS = frozenset({"encoding", "data"})


def _decode_base64(index: int, value) -> bytes:
    if not isinstance(value, str):
        raise BadRequest(f"sample {index}: data must be a base64 string")
    try:
        return base64.b64decode(value, validate=True)
    except binascii.Error as exc:
        raise BadRequest(f"sample {index}: bad base64 data: {exc}") from exc


def _decode_sample(index: int, entry, pixel_scale: float) -> tuple[np.ndarray, InputShape]:
    if not isinstance(entry, dict):
        raise BadRequest(f"sample {index} must be an object")
    encoding = entry.get("encoding")
    if encoding == "f32le":
        unknown = sorted(set(entry) - _F32LE_FIELDS)
        if unknown:
            raise BadRequest(f"sample {index}: unknown fields: {unknown}")
        if "shape" not in entry or "data" not in entry:
            raise BadRequest(f"sample {index}: f32le needs 'shape' and 'data'")
        try:
            shape = shape_from_json(entry["shape"])
        except ValueError as exc:
            raise BadRequest(f"sample {index}: {exc}") from exc
        raw = _decode_base64(index, entry["data"])
        expected = 4 * shape.flat_size
        if len(raw) != expected:
            raise BadRequest(f"sample {index}: expected {expected} bytes, got {len(raw)}")
        vector = np.frombuffer(raw, dtype="<f4")
        if not np.isfinite(vector).all():
            raise BadRequest(f"sample {index}: non-finite values")
        return vector, shape
    if encoding == "pgm":
        unknown = sorted(set(entry) - _PGM_FIELDS)
        if unknown:
            raise BadRequest(f"sample {index}: unknown fields: {unknown}")
        if "data" not in entry:
            raise BadRequest(f"sample {index}: pgm needs 'data'")
        raw = _decode_base64(index, entry["data"])
        try:
            width, height, _, pixels = parse_pgm(raw)
        except ValueError as exc:
            raise BadRequest(f"sample {index}: {exc}") from exc
        vector = (pixels.astype(np.float32) / np.float32(pixel_scale)).reshape(-1)
        return vector, InputShape((1, height, width))
    raise BadRequest(f"sample {index}: unknown encoding {encoding!r}")


def decode_request(body: bytes, pixel_scale: float = 255.0) -> tuple[SampleBatch, SensitivityPolicy | None]:
    """Decode a prediction request body into a sample batch and optional policy."""
    try:
        doc = loads_strict(body)
    except ValueError as exc:
        raise BadRequest(f"invalid JSON body: {exc}") from exc
    if not isinstance(doc, dict):
        raise BadRequest("request must be a JSON object")
    unknown = sorted(set(doc) - _REQUEST_FIELDS)
    if unknown:
        raise BadRequest(f"unknown request fields: {unknown}")
    samples = doc.get("samples")
    if not isinstance(samples, list):
        raise BadRequest("'samples' must be an array")
    if not samples:
        raise BadRequest("'samples' must not be empty")
    shape = None
    rows = []
    for i, entry in enumerate(samples):
        vector, entry_shape = _decode_sample(i, entry, pixel_scale)
        if shape is None:
            shape = entry_shape
        elif entry_shape != shape:
            raise BadRequest(
                f"sample {i} has shape {list(entry_shape.dims)}, "
                f"sample 0 has shape {list(shape.dims)}"
            )
        rows.append(vector)
    try:
        batch = SampleBatch(shape, np.stack(rows))
    except ValueError as exc:
        raise BadRequest(str(exc)) from exc
    policy = parse_policy(doc["policy"]) if "policy" in doc else None
    return batch, policy


def f32le_sample(values, shape) -> dict:
    """Client-side helper: encode one flat float vector as an f32le sample."""
    dims = list(shape.dims) if isinstance(shape, InputShape) else list(shape)
    raw = np.asarray(values, dtype="<f4").reshape(-1).tobytes()
    return {
        "encoding": "f32le",
        "shape": dims,
        "data": base64.b64encode(raw).decode("ascii"),
    }


def pgm_sample(data: bytes) -> dict:
    """Client-side helper: wrap raw PGM file bytes as a pgm sample."""
    return {"encoding": "pgm", "data": base64.b64encode(data).decode("ascii")}


def encode_request(samples: list[dict], policy: dict | None = None) -> bytes:
    """Client-side helper: build a canonical prediction request body."""
    doc: dict = {"samples": samples}
    if policy is not None:
        doc["policy"] = policy
    return dumps_canonical(doc)


def render_prediction(ensemble: Ensemble, output: EnsembleOutput, combined: list[int] | None) -> dict:
    """Build the response object: one key per model id plus reserved keys."""
    body: dict = {"_batch_size": output.batch_size}
    for model, indices in zip(ensemble.models, output.per_model):
        body[model.id] = [model.labels[k] for k in indices]
    if combined is not None:
        body["_combined"] = [BINARY_LABELS[v] for v in combined]
    return body
