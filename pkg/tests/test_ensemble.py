"""Ensemble engine: manifests, budget accounting, and the forward pass."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build_ensemble, doc_bytes, lin1_doc
from ensemblegate.ensemble import (
    ModelManifest,
    forward,
    load_ensemble,
    load_manifest,
    load_manifest_file,
)
from ensemblegate.errors import (
    BatchTooLarge,
    BudgetExceeded,
    EmptyBatch,
    MalformedManifest,
    MalformedModel,
    ShapeMismatch,
)
from ensemblegate.models import InputShape, SampleBatch, preprocess_call_count


def parameter_bytes(k: int, d: int) -> int:
    """Arithmetic oracle for the accounting unit: 4 bytes per parameter."""
    return 4 * (k * d + k)


def manifest_doc(entries, budget=10_000_000, max_batch=64, preprocess=None, **extra) -> bytes:
    doc = {
        "memory_budget_bytes": budget,
        "max_batch": max_batch,
        "preprocess": preprocess or {"mean": [0.0], "std": [1.0], "pixel_scale": 255.0},
        "models": entries,
    }
    doc.update(extra)
    return json.dumps(doc).encode("utf-8")


def batch(values, dims=None):
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    return SampleBatch(InputShape(tuple(dims) if dims else (arr.shape[1],)), arr)


ENTRIES = [{"id": "m1", "path": "m1.json"}, {"id": "m2", "path": "m2.json"}]


class TestLoadManifest:
    def test_round_trip(self):
        manifest = load_manifest(manifest_doc(ENTRIES))
        assert manifest.size == 2
        assert manifest.memory_budget_bytes == 10_000_000
        assert manifest.max_batch == 64
        assert [e.id for e in manifest.models] == ["m1", "m2"]
        assert manifest.preprocess.pixel_scale == 255.0

    def test_duplicate_ids(self):
        entries = [{"id": "m1", "path": "a.json"}, {"id": "m1", "path": "b.json"}]
        with pytest.raises(MalformedManifest):
            load_manifest(manifest_doc(entries))

    def test_max_batch_zero(self):
        with pytest.raises(MalformedManifest):
            load_manifest(manifest_doc(ENTRIES, max_batch=0))

    def test_budget_zero(self):
        with pytest.raises(MalformedManifest):
            load_manifest(manifest_doc(ENTRIES, budget=0))

    def test_no_models(self):
        with pytest.raises(MalformedManifest):
            load_manifest(manifest_doc([]))

    def test_unknown_field(self):
        with pytest.raises(MalformedManifest):
            load_manifest(manifest_doc(ENTRIES, notes="hi"))

    def test_missing_preprocess(self):
        raw = json.dumps({"memory_budget_bytes": 1, "max_batch": 1, "models": ENTRIES})
        with pytest.raises(MalformedManifest):
            load_manifest(raw.encode())

    def test_pixel_scale_defaults(self):
        manifest = load_manifest(manifest_doc(ENTRIES, preprocess={"mean": [0.0], "std": [1.0]}))
        assert manifest.preprocess.pixel_scale == 255.0

    def test_underscore_id_rejected(self):
        entries = [{"id": "_m", "path": "a.json"}]
        with pytest.raises(MalformedManifest):
            load_manifest(manifest_doc(entries))

    def test_non_integer_counts(self):
        with pytest.raises(MalformedManifest):
            load_manifest(manifest_doc(ENTRIES, budget=12.5))
        with pytest.raises(MalformedManifest):
            load_manifest(manifest_doc(ENTRIES, max_batch=True))

    def test_syntax_error(self):
        with pytest.raises(MalformedManifest):
            load_manifest(b"{not json")


def two_model_docs(dim=4):
    shape = tuple([dim])
    eye = np.eye(2, dim).tolist()
    swapped = np.eye(2, dim)[::-1].tolist()
    return [
        lin1_doc(model_id="m1", input_shape=shape, weights=eye),
        lin1_doc(model_id="m2", input_shape=shape, weights=swapped),
    ]


class TestLoadEnsemble:
    def test_bytes_used_closed_form(self, tmp_path):
        ensemble = build_ensemble(tmp_path, two_model_docs(dim=4), budget=80)
        assert ensemble.bytes_used == 2 * parameter_bytes(2, 4) == 80
        assert ensemble.size == 2
        assert ensemble.model_ids == ("m1", "m2")

    def test_budget_boundary(self, tmp_path):
        with pytest.raises(BudgetExceeded) as excinfo:
            build_ensemble(tmp_path, two_model_docs(dim=4), budget=79)
        assert "budget" in str(excinfo.value)

    def test_shape_disagreement(self, tmp_path):
        docs = [
            lin1_doc(model_id="m1", input_shape=(4,), weights=np.eye(2, 4).tolist()),
            lin1_doc(model_id="m2", input_shape=(8,), weights=np.eye(2, 8).tolist()),
        ]
        with pytest.raises(ShapeMismatch):
            build_ensemble(tmp_path, docs)

    def test_binary_compatible_flag(self, tmp_path):
        assert build_ensemble(tmp_path, two_model_docs()).binary_compatible is True
        three_class = lin1_doc(
            model_id="m3",
            labels=("a", "b", "c"),
            weights=((1.0, 0.0), (0.0, 1.0), (1.0, 1.0)),
            bias=(0.0, 0.0, 0.0),
        )
        mixed = build_ensemble(tmp_path, [lin1_doc(), three_class])
        assert mixed.binary_compatible is False

    def test_id_mismatch_between_manifest_and_file(self, tmp_path):
        (tmp_path / "m1.json").write_bytes(doc_bytes(lin1_doc(model_id="other")))
        manifest_path = tmp_path / "manifest.json"
        manifest_path.write_bytes(manifest_doc([{"id": "m1", "path": "m1.json"}]))
        with pytest.raises(MalformedModel):
            load_ensemble(load_manifest_file(manifest_path))

    def test_missing_file(self, tmp_path):
        manifest_path = tmp_path / "manifest.json"
        manifest_path.write_bytes(manifest_doc([{"id": "m1", "path": "nowhere.json"}]))
        with pytest.raises(MalformedModel):
            load_ensemble(load_manifest_file(manifest_path))

    def test_paths_resolved_relative_to_manifest_dir(self, tmp_path):
        nested = tmp_path / "cfg"
        nested.mkdir()
        (tmp_path / "m1.json").write_bytes(doc_bytes(lin1_doc()))
        manifest_path = nested / "manifest.json"
        manifest_path.write_bytes(manifest_doc([{"id": "m1", "path": "../m1.json"}]))
        ensemble = load_ensemble(load_manifest_file(manifest_path))
        assert ensemble.model_ids == ("m1",)

    def test_preprocess_channels_validated_at_load(self, tmp_path):
        docs = [lin1_doc()]
        with pytest.raises(ShapeMismatch):
            build_ensemble(tmp_path, docs, mean=(0.0, 0.0, 0.0), std=(1.0, 1.0, 1.0))


class TestForward:
    def test_single_model_pass_through(self, tmp_path):
        ensemble = build_ensemble(tmp_path, [lin1_doc()])
        out = forward(ensemble, batch([0.0, 1.0]))
        assert out.per_model == ((1,),)
        assert out.model_ids == ("m1",)

    def test_two_models_identity_and_swapped(self, tmp_path):
        ensemble = build_ensemble(
            tmp_path,
            [
                lin1_doc(model_id="m1"),
                lin1_doc(model_id="m2", weights=((0.0, 1.0), (1.0, 0.0))),
            ],
        )
        out = forward(ensemble, batch([0.2, 0.9]))
        assert out.per_model == ((1,), (0,))

    def test_batch_of_three_keeps_lengths(self, tmp_path):
        ensemble = build_ensemble(tmp_path, two_model_docs(dim=2))
        out = forward(ensemble, batch(np.zeros((3, 2))))
        assert all(len(row) == 3 for row in out.per_model)
        assert out.batch_size == 3

    def test_every_batch_size_up_to_max(self, tmp_path):
        ensemble = build_ensemble(tmp_path, two_model_docs(dim=2), max_batch=16)
        rng = np.random.default_rng(1)
        for b in range(1, 17):
            out = forward(ensemble, batch(rng.normal(size=(b, 2)).astype(np.float32)))
            assert [len(row) for row in out.per_model] == [b, b]

    def test_batch_too_large(self, tmp_path):
        ensemble = build_ensemble(tmp_path, two_model_docs(dim=2), max_batch=4)
        with pytest.raises(BatchTooLarge):
            forward(ensemble, batch(np.zeros((5, 2))))

    def test_empty_batch_defended(self, tmp_path):
        ensemble = build_ensemble(tmp_path, two_model_docs(dim=2))
        with pytest.raises(EmptyBatch):
            forward(ensemble, SampleBatch(InputShape((2,)), np.zeros((0, 2), dtype=np.float32)))

    def test_shape_mismatch(self, tmp_path):
        ensemble = build_ensemble(tmp_path, two_model_docs(dim=2))
        with pytest.raises(ShapeMismatch):
            forward(ensemble, batch(np.zeros((1, 4)), dims=(4,)))

    def test_single_preprocess_invocation_for_any_n(self, tmp_path):
        for n in (1, 3, 5):
            docs = [lin1_doc(model_id=f"m{i}") for i in range(n)]
            subdir = tmp_path / f"n{n}"
            subdir.mkdir()
            ensemble = build_ensemble(subdir, docs)
            before = preprocess_call_count()
            forward(ensemble, batch([0.3, 0.4]))
            assert preprocess_call_count() == before + 1

    def test_order_follows_manifest_permutation(self, tmp_path):
        docs = two_model_docs(dim=2)
        (tmp_path / "fwd").mkdir()
        (tmp_path / "rev").mkdir()
        forward_order = build_ensemble(tmp_path / "fwd", docs)
        reverse_order = build_ensemble(tmp_path / "rev", docs[::-1])
        x = batch([0.2, 0.9])
        out_fwd = forward(forward_order, x)
        out_rev = forward(reverse_order, x)
        assert out_fwd.model_ids == ("m1", "m2")
        assert out_rev.model_ids == ("m2", "m1")
        assert dict(zip(out_fwd.model_ids, out_fwd.per_model)) == dict(
            zip(out_rev.model_ids, out_rev.per_model)
        )

    @given(
        b=st.integers(min_value=1, max_value=5),
        data=st.data(),
    )
    @settings(deadline=None, max_examples=40)
    def test_batch_equals_concatenated_singles(self, tmp_path_factory, b, data):
        grid = st.integers(min_value=-64, max_value=64).map(lambda n: n / 16.0)
        tmp_path = tmp_path_factory.mktemp("eq")
        ensemble = build_ensemble(tmp_path, two_model_docs(dim=3), mean=(0.25,), std=(0.5,))
        rows = [[data.draw(grid) for _ in range(3)] for _ in range(b)]
        whole = forward(ensemble, batch(np.asarray(rows)))
        singles = [forward(ensemble, batch(row)) for row in rows]
        for model_index in range(2):
            concatenated = [s.per_model[model_index][0] for s in singles]
            assert list(whole.per_model[model_index]) == concatenated


class TestManifestType:
    def test_direct_construction_validates(self):
        from ensemblegate.ensemble import ManifestEntry
        from ensemblegate.models import PreprocessSpec

        with pytest.raises(MalformedManifest):
            ModelManifest(1, 1, PreprocessSpec(), ())
        with pytest.raises(MalformedManifest):
            ModelManifest(0, 1, PreprocessSpec(), (ManifestEntry("m1", "a.json"),))
