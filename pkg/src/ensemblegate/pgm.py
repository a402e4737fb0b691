"""Binary PGM ("P5") reading and writing, no third-party decoders.

Accepted form: a ``P5`` magic token, then width, height and maxval as
whitespace-separated decimal tokens, exactly one whitespace byte, then
``width * height`` raster bytes (one byte per pixel, so maxval <= 255).
Comment lines are not supported.
"""

from __future__ import annotations

import numpy as np

_WHITESPACE = b" \t\n\r\x0b\x0c"


def parse_pgm(data: bytes) -> tuple[int, int, int, np.ndarray]:
    """Decode a P5 document into (width, height, maxval, pixels).

    ``pixels`` is a (height, width) uint8 array. Raises ValueError on any
    structural defect.
    """
    pos = 0

    def next_token() -> bytes:
        nonlocal pos
        while pos < len(data) and data[pos] in _WHITESPACE:
            pos += 1
        start = pos
        while pos < len(data) and data[pos] not in _WHITESPACE:
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        return data[start:pos]

    magic = next_token()
    if magic != b"P5":
        raise ValueError(f"not a binary PGM (expected P5 magic, got {magic!r})")
    fields = {}
    for name in ("width", "height", "maxval"):
        token = next_token()
        if not token.isdigit():
            raise ValueError(f"bad PGM {name} token {token!r}")
        fields[name] = int(token)
    width, height, maxval = fields["width"], fields["height"], fields["maxval"]
    if width < 1 or height < 1:
        raise ValueError(f"bad PGM dimensions {width}x{height}")
    if not 1 <= maxval <= 255:
        raise ValueError(f"PGM maxval must be in [1, 255], got {maxval}")
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise ValueError("missing whitespace before PGM raster")
    pos += 1
    raster = data[pos:]
    if len(raster) != width * height:
        raise ValueError(f"expected {width * height} raster bytes, got {len(raster)}")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    if int(pixels.max()) > maxval:
        raise ValueError(f"pixel value {int(pixels.max())} exceeds maxval {maxval}")
    return width, height, maxval, pixels


def write_pgm(pixels: np.ndarray, maxval: int = 255) -> bytes:
    """Encode a (height, width) uint8 array as a canonical P5 document."""
    arr = np.asarray(pixels, dtype=np.uint8)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError("pixels must be a non-empty 2-D array")
    if not 1 <= maxval <= 255:
        raise ValueError(f"maxval must be in [1, 255], got {maxval}")
    if int(arr.max()) > maxval:
        raise ValueError(f"pixel value {int(arr.max())} exceeds maxval {maxval}")
    height, width = arr.shape
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    return header + arr.tobytes()
