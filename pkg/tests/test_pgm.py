"""PGM serialization: byte-exact writing, strict reading."""
import numpy as np
import pytest

from salforge.errors import MalformedHeader, TruncatedPayload, UnsupportedMaxval
from salforge.pgm import read_pgm, write_pgm
from salforge.saliency import SaliencyMap


def test_round_trip(tmp_path):
    rng = np.random.default_rng(31)
    m = SaliencyMap(rng.integers(0, 256, (13, 7)).astype(np.uint8))
    path = tmp_path / "m.pgm"
    write_pgm(m, path)
    back = read_pgm(path)
    assert np.array_equal(back.pixels, m.pixels)


def test_exact_bytes_for_known_map(tmp_path):
    payload = bytes([1, 2, 3, 250, 251, 252])
    m = SaliencyMap(np.frombuffer(payload, dtype=np.uint8).reshape(2, 3).copy())
    path = tmp_path / "m.pgm"
    write_pgm(m, path)
    assert path.read_bytes() == b"P5\n3 2\n255\n" + payload


def test_reader_accepts_any_whitespace_layout(tmp_path):
    path = tmp_path / "m.pgm"
    path.write_bytes(b"P5 3\n2\t255\n" + bytes(6))
    m = read_pgm(path)
    assert (m.width, m.height) == (3, 2)


def test_unsupported_maxval(tmp_path):
    path = tmp_path / "m.pgm"
    path.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
    with pytest.raises(UnsupportedMaxval):
        read_pgm(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "m.pgm"
    path.write_bytes(b"P5\n3 2\n255\n" + bytes(5))
    with pytest.raises(TruncatedPayload):
        read_pgm(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "m.pgm"
    path.write_bytes(b"P5\n3 2\n255\n" + bytes(7))
    with pytest.raises(MalformedHeader):
        read_pgm(path)


def test_bad_magic(tmp_path):
    path = tmp_path / "m.pgm"
    path.write_bytes(b"P6\n1 1\n255\nx")
    with pytest.raises(MalformedHeader):
        read_pgm(path)


def test_garbage_header_field(tmp_path):
    path = tmp_path / "m.pgm"
    path.write_bytes(b"P5\nthree 2\n255\n" + bytes(6))
    with pytest.raises(MalformedHeader):
        read_pgm(path)
