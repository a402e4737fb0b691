"""Sensitivity policies: combine N binary model outputs into one decision.

``any`` ORs the votes (maximum sensitivity: one detection is enough),
``all`` ANDs them, and ``at_least`` fires when k or more models agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import Ensemble, EnsembleOutput
from .errors import BadK, BadPolicy, NotBinary, PolicyUnavailable

POLICY_KINDS = ("any", "all", "at_least")

_POLICY_FIELDS = frozenset({"kind", "k"})


@dataclass(frozen=True)
class SensitivityPolicy:
    kind: str
    k: int | None = None


def parse_policy(obj) -> SensitivityPolicy:
    """Parse a request-level policy object {"kind": ..., "k": ...}.

    k is only meaningful (and only accepted) for at_least; its range is
    checked later, once the ensemble size is known.
    """
    if not isinstance(obj, dict):
        raise BadPolicy(f"policy must be an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - _POLICY_FIELDS)
    if unknown:
        raise BadPolicy(f"unknown policy fields: {unknown}")
    kind = obj.get("kind")
    if kind not in POLICY_KINDS:
        raise BadPolicy(f"unknown policy kind {kind!r} (expected one of {list(POLICY_KINDS)})")
    if kind == "at_least":
        if "k" not in obj:
            raise BadPolicy("policy 'at_least' requires k")
        k = obj["k"]
        if isinstance(k, bool) or not isinstance(k, int):
            raise BadPolicy(f"k must be an integer, got {k!r}")
        return SensitivityPolicy(kind, k)
    if "k" in obj:
        raise BadPolicy(f"k is only valid for 'at_least', not {kind!r}")
    return SensitivityPolicy(kind)


def apply_policy(policy: SensitivityPolicy, votes) -> list[int]:
    """Combine an N x B matrix of binary votes into B binary outputs.

    any: OR over models; all: AND over models; at_least: 1 iff the column
    sum reaches k (1 <= k <= N, else BadK).
    """
    arr = np.asarray(votes)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"votes must be a non-empty N x B matrix, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise NotBinary("votes must all be 0 or 1")
    arr = arr.astype(np.int64)
    n = arr.shape[0]
    if policy.kind == "any":
        combined = arr.max(axis=0)
    elif policy.kind == "all":
        combined = arr.min(axis=0)
    elif policy.kind == "at_least":
        k = policy.k
        if isinstance(k, bool) or not isinstance(k, int):
            raise BadK(f"k must be an integer, got {k!r}")
        if not 1 <= k <= n:
            raise BadK(f"k must be between 1 and {n} for this ensemble, got {k}")
        combined = (arr.sum(axis=0) >= k).astype(np.int64)
    else:
        raise BadPolicy(f"unknown policy kind {policy.kind!r}")
    return [int(v) for v in combined]


def votes_from_output(output: EnsembleOutput, ensemble: Ensemble) -> np.ndarray:
    """Turn per-model label indices into an N x B vote matrix.

    Only defined for binary-compatible ensembles, where every model uses the
    labels ["absent", "present"] and the index of "present" is the vote.
    """
    if not ensemble.binary_compatible:
        raise PolicyUnavailable(
            "policy unavailable: every model must use the labels ['absent', 'present']"
        )
    return np.asarray(output.per_model, dtype=np.int64)
