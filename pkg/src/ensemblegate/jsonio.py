"""Strict JSON parsing and canonical serialization for the wire protocol."""

import json


def _reject_duplicates(pairs):
    obj = {}
    for key, value in pairs:
        if key in obj:
            raise ValueError(f"duplicate key {key!r}")
        obj[key] = value
    return obj


def _reject_constant(token):
    raise ValueError(f"non-finite number {token!r}")


def loads_strict(data: bytes | str):
    """Parse UTF-8 JSON, rejecting duplicate keys and NaN/Infinity tokens.

    Raises ValueError (or a subclass) on any defect.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    return json.loads(text, object_pairs_hook=_reject_duplicates, parse_constant=_reject_constant)


def dumps_canonical(obj) -> bytes:
    """Serialize with lexicographically sorted keys and no whitespace.

    The byte output is a pure function of the value, which is what makes
    golden-response tests and the determinism guarantee possible.
    """
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), allow_nan=False, ensure_ascii=True
    ).encode("utf-8")
