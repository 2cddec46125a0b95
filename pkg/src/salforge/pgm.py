"""Binary PGM (P5, maxval 255) reader and writer.

The writer emits the exact canonical header ``P5\\n{w} {h}\\n255\\n`` followed
by the row-major payload, so write/read round-trips are lossless byte for
byte. The reader accepts any whitespace-delimited header but is otherwise
strict: maxval must be 255 and the payload must be exactly width * height
bytes.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import MalformedHeader, TruncatedPayload, UnsupportedMaxval
from .saliency import SaliencyMap


def write_pgm(map_: SaliencyMap, path) -> None:
    header = f"P5\n{map_.width} {map_.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + map_.pixels.tobytes())


def _next_token(raw: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(raw) and raw[pos:pos + 1].isspace():
        pos += 1
    start = pos
    while pos < len(raw) and not raw[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise MalformedHeader("unexpected end of PGM header")
    return raw[start:pos], pos


def read_pgm(path) -> SaliencyMap:
    raw = Path(path).read_bytes()
    magic, pos = _next_token(raw, 0)
    if magic != b"P5":
        raise MalformedHeader(f"expected P5 magic, found {magic!r}")
    fields = []
    for name in ("width", "height", "maxval"):
        token, pos = _next_token(raw, pos)
        try:
            fields.append(int(token))
        except ValueError:
            raise MalformedHeader(f"non-integer {name} field {token!r}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise MalformedHeader(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedMaxval(f"maxval {maxval} not supported (only 255)")
    if pos >= len(raw) or not raw[pos:pos + 1].isspace():
        raise MalformedHeader("missing whitespace separator before payload")
    payload = raw[pos + 1:]
    expected = width * height
    if len(payload) < expected:
        raise TruncatedPayload(f"payload holds {len(payload)} of {expected} bytes")
    if len(payload) > expected:
        raise MalformedHeader(f"{len(payload) - expected} trailing bytes after payload")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()
    return SaliencyMap(pixels)
