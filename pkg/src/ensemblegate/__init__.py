"""ensemblegate: N classifiers behind one REST endpoint.

A self-contained serving gateway: LIN1 linear models are loaded from a
manifest into a budget-accounted shared pool, evaluated together on each
request batch (any size up to max_batch), and combined on demand with
client-selected sensitivity policies.
"""

__version__ = "0.1.0"

from .ensemble import (
    Ensemble,
    EnsembleOutput,
    ManifestEntry,
    ModelManifest,
    forward,
    load_ensemble,
    load_manifest,
    load_manifest_file,
)
from .errors import (
    BadK,
    BadPolicy,
    BadRequest,
    BatchTooLarge,
    BudgetExceeded,
    EmptyBatch,
    GatewayError,
    MalformedManifest,
    MalformedModel,
    NotBinary,
    PolicyUnavailable,
    ShapeMismatch,
)
from .fixtures import gen_manifest, gen_model, splitmix64
from .gateway import GatewayApp, GatewayServer, serve
from .models import (
    BINARY_LABELS,
    InputShape,
    LinearModel,
    PreprocessSpec,
    SampleBatch,
    linear_predict,
    parse_model_file,
    preprocess,
    preprocess_call_count,
)
from .policy import SensitivityPolicy, apply_policy, parse_policy, votes_from_output
from .wire import decode_request, encode_request, f32le_sample, pgm_sample, render_prediction

__all__ = [
    "BINARY_LABELS",
    "BadK",
    "BadPolicy",
    "BadRequest",
    "BatchTooLarge",
    "BudgetExceeded",
    "EmptyBatch",
    "Ensemble",
    "EnsembleOutput",
    "GatewayApp",
    "GatewayError",
    "GatewayServer",
    "InputShape",
    "LinearModel",
    "ManifestEntry",
    "MalformedManifest",
    "MalformedModel",
    "ModelManifest",
    "NotBinary",
    "PolicyUnavailable",
    "PreprocessSpec",
    "SampleBatch",
    "SensitivityPolicy",
    "ShapeMismatch",
    "apply_policy",
    "decode_request",
    "encode_request",
    "f32le_sample",
    "forward",
    "gen_manifest",
    "gen_model",
    "linear_predict",
    "load_ensemble",
    "load_manifest",
    "load_manifest_file",
    "parse_model_file",
    "parse_policy",
    "pgm_sample",
    "preprocess",
    "preprocess_call_count",
    "render_prediction",
    "serve",
    "splitmix64",
    "votes_from_output",
]
