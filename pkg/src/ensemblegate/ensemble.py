"""Manifest loading, budget-accounted ensemble assembly, and the forward pass."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from . import models as model_core
from .errors import (
    BatchTooLarge,
    BudgetExceeded,
    EmptyBatch,
    MalformedManifest,
    MalformedModel,
    ShapeMismatch,
)
from .jsonio import loads_strict
from .models import BINARY_LABELS, MODEL_ID_RE, InputShape, LinearModel, PreprocessSpec, SampleBatch

_MANIFEST_FIELDS = frozenset({"memory_budget_bytes", "max_batch", "preprocess", "models"})
_PREPROCESS_FIELDS = frozenset({"mean", "std", "pixel_scale"})
_ENTRY_FIELDS = frozenset({"id", "path"})


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str


@dataclass(frozen=True)
class ModelManifest:
    """Declarative serving configuration: budget, batch limit, transform, models."""

    memory_budget_bytes: int
    max_batch: int
    preprocess: PreprocessSpec
    models: tuple[ManifestEntry, ...]
    base_dir: Path = Path(".")

    def __post_init__(self):
        if self.memory_budget_bytes < 1:
            raise MalformedManifest(f"memory_budget_bytes must be >= 1, got {self.memory_budget_bytes}")
        if self.max_batch < 1:
            raise MalformedManifest(f"max_batch must be >= 1, got {self.max_batch}")
        entries = tuple(self.models)
        if not entries:
            raise MalformedManifest("manifest needs at least one model entry")
        ids = [entry.id for entry in entries]
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        if duplicates:
            raise MalformedManifest(f"duplicate model ids: {duplicates}")
        for entry in entries:
            if not isinstance(entry.id, str) or not MODEL_ID_RE.fullmatch(entry.id):
                raise MalformedManifest(f"bad model id {entry.id!r}")
        object.__setattr__(self, "models", entries)
        object.__setattr__(self, "base_dir", Path(self.base_dir))

    @property
    def size(self) -> int:
        return len(self.models)


def _require_count(value, field: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise MalformedManifest(f"{field} must be an integer, got {value!r}")
    return value


def _parse_preprocess(raw) -> PreprocessSpec:
    if not isinstance(raw, dict):
        raise MalformedManifest("preprocess must be an object")
    unknown = sorted(set(raw) - _PREPROCESS_FIELDS)
    if unknown:
        raise MalformedManifest(f"unknown preprocess fields: {unknown}")
    for key in ("mean", "std"):
        if key not in raw:
            raise MalformedManifest(f"preprocess.{key} is required")
        values = raw[key]
        if not isinstance(values, list) or not values:
            raise MalformedManifest(f"preprocess.{key} must be a non-empty array")
        for v in values:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise MalformedManifest(f"preprocess.{key}: {v!r} is not a number")
    scale = raw.get("pixel_scale", 255.0)
    if isinstance(scale, bool) or not isinstance(scale, (int, float)):
        raise MalformedManifest(f"preprocess.pixel_scale must be a number, got {scale!r}")
    try:
        return PreprocessSpec(tuple(raw["mean"]), tuple(raw["std"]), float(scale))
    except ValueError as exc:
        raise MalformedManifest(f"bad preprocess: {exc}") from exc


def load_manifest(data: bytes, base_dir: str | Path = ".") -> ModelManifest:
    """Parse and validate a manifest document.

    Model paths stay as written; they are resolved against ``base_dir``
    (the manifest file's directory) when the ensemble is loaded.
    """
    try:
        doc = loads_strict(data)
    except ValueError as exc:
        raise MalformedManifest(f"unreadable manifest: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedManifest("manifest must be a JSON object")
    unknown = sorted(set(doc) - _MANIFEST_FIELDS)
    if unknown:
        raise MalformedManifest(f"unknown manifest fields: {unknown}")
    missing = sorted(_MANIFEST_FIELDS - set(doc))
    if missing:
        raise MalformedManifest(f"missing manifest fields: {missing}")
    budget = _require_count(doc["memory_budget_bytes"], "memory_budget_bytes")
    max_batch = _require_count(doc["max_batch"], "max_batch")
    spec = _parse_preprocess(doc["preprocess"])
    raw_models = doc["models"]
    if not isinstance(raw_models, list):
        raise MalformedManifest("models must be an array")
    entries = []
    for i, raw in enumerate(raw_models):
        if not isinstance(raw, dict) or set(raw) != _ENTRY_FIELDS:
            raise MalformedManifest(f"models[{i}] must be an object with exactly 'id' and 'path'")
        if not isinstance(raw["id"], str) or not isinstance(raw["path"], str):
            raise MalformedManifest(f"models[{i}]: id and path must be strings")
        entries.append(ManifestEntry(raw["id"], raw["path"]))
    return ModelManifest(budget, max_batch, spec, tuple(entries), Path(base_dir))


def load_manifest_file(path: str | Path) -> ModelManifest:
    path = Path(path)
    return load_manifest(path.read_bytes(), base_dir=path.parent)


@dataclass(frozen=True)
class Ensemble:
    """An immutable set of N models sharing one accounted memory pool."""

    models: tuple[LinearModel, ...]
    shared_shape: InputShape
    preprocess: PreprocessSpec
    bytes_used: int
    memory_budget_bytes: int
    max_batch: int
    binary_compatible: bool

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))

    @property
    def model_ids(self) -> tuple[str, ...]:
        return tuple(m.id for m in self.models)

    @property
    def size(self) -> int:
        return len(self.models)


@dataclass(frozen=True)
class EnsembleOutput:
    """Per-model label indices for one batch, in manifest order."""

    model_ids: tuple[str, ...]
    per_model: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        ids = tuple(self.model_ids)
        per_model = tuple(tuple(row) for row in self.per_model)
        if len(per_model) != len(ids):
            raise ValueError(f"{len(per_model)} output rows for {len(ids)} model ids")
        lengths = {len(row) for row in per_model}
        if len(lengths) > 1:
            raise ValueError(f"inconsistent per-model output lengths: {sorted(lengths)}")
        object.__setattr__(self, "model_ids", ids)
        object.__setattr__(self, "per_model", per_model)

    @property
    def batch_size(self) -> int:
        return len(self.per_model[0]) if self.per_model else 0


def load_ensemble(manifest: ModelManifest) -> Ensemble:
    """Load every manifest entry into one budget-accounted pool, all or nothing.

    Each model costs 4 * (K*D + K) bytes; the sum must fit the budget. All
    models must agree on the input shape, since one shared transform feeds
    them all.
    """
    loaded = []
    for entry in manifest.models:
        path = Path(entry.path)
        if not path.is_absolute():
            path = manifest.base_dir / path
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise MalformedModel(f"cannot read model file {path}: {exc}") from exc
        model = model_core.parse_model_file(data)
        if model.id != entry.id:
            raise MalformedModel(
                f"model file {path} has id {model.id!r} but the manifest says {entry.id!r}"
            )
        loaded.append(model)
    shared_shape = loaded[0].input_shape
    for model in loaded[1:]:
        if model.input_shape != shared_shape:
            raise ShapeMismatch(
                f"model {model.id!r} has input shape {list(model.input_shape.dims)}, "
                f"expected {list(shared_shape.dims)} shared by the ensemble"
            )
    for name, values in (("mean", manifest.preprocess.mean), ("std", manifest.preprocess.std)):
        if len(values) not in (1, shared_shape.channels):
            raise ShapeMismatch(
                f"preprocess {name} has {len(values)} entries; input shape "
                f"{list(shared_shape.dims)} has {shared_shape.channels} channel(s)"
            )
    bytes_used = sum(m.parameter_bytes for m in loaded)
    if bytes_used > manifest.memory_budget_bytes:
        raise BudgetExceeded(
            f"memory budget exceeded: ensemble needs {bytes_used} bytes, "
            f"budget is {manifest.memory_budget_bytes} bytes"
        )
    return Ensemble(
        models=tuple(loaded),
        shared_shape=shared_shape,
        preprocess=manifest.preprocess,
        bytes_used=bytes_used,
        memory_budget_bytes=manifest.memory_budget_bytes,
        max_batch=manifest.max_batch,
        binary_compatible=all(m.labels == BINARY_LABELS for m in loaded),
    )


def forward(ensemble: Ensemble, raw: SampleBatch) -> EnsembleOutput:
    """Evaluate every model on one preprocessed batch (single transform).

    Output order is manifest order; results are deterministic for identical
    inputs no matter how requests interleave.
    """
    b = raw.batch_size
    if b == 0:
        raise EmptyBatch("batch has no samples")
    if b > ensemble.max_batch:
        raise BatchTooLarge(f"batch size {b} exceeds max_batch {ensemble.max_batch}")
    if raw.shape != ensemble.shared_shape:
        raise ShapeMismatch(
            f"batch shape {list(raw.shape.dims)} does not match ensemble "
            f"input shape {list(ensemble.shared_shape.dims)}"
        )
    prepared = model_core.preprocess(raw, ensemble.preprocess)
    per_model = tuple(tuple(model_core.linear_predict(m, prepared)) for m in ensemble.models)
    return EnsembleOutput(ensemble.model_ids, per_model)
