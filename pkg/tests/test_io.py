import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from apdnegf.errors import ValidationError
from apdnegf.io import ArtifactIOError, MAGIC, csv_text, decode_tensor, read_tensor, sha256_file, write_csv, write_tensor


def test_identity_layout(tmp_path):
    p = write_tensor(np.eye(2), tmp_path / "eye.negft")
    data = p.read_bytes()
    assert len(data) == 7 + 4 + 16 + 1 + 32
    assert data[:7] == b"NEGFT1\0" == MAGIC
    assert struct.unpack_from("<I", data, 7) == (2,)
    assert struct.unpack_from("<2Q", data, 11) == (2, 2)
    assert data[27] == 1
    assert struct.unpack_from("<4d", data, 28) == (1.0, 0.0, 0.0, 1.0)


def test_complex_tag_and_interleaving(tmp_path):
    p = write_tensor(np.array([1 + 2j, 3 - 4j]), tmp_path / "c.negft")
    data = p.read_bytes()
    assert data[7 + 4 + 8] == 2
    assert struct.unpack_from("<4d", data, 20) == (1.0, 2.0, 3.0, -4.0)


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(st.sampled_from([np.float64, np.complex128]), hnp.array_shapes(min_dims=0, max_dims=4, max_side=5),
                  elements=st.floats(-1e300, 1e300, allow_nan=False)))
def test_round_trip_bitwise(tmp_path_factory, a):
    p = write_tensor(a, tmp_path_factory.mktemp("t") / "a.negft")
    b = read_tensor(p)
    assert b.shape == a.shape and b.dtype == a.dtype
    assert b.tobytes() == np.ascontiguousarray(a).tobytes()


def test_nan_refused(tmp_path):
    a = np.zeros((2, 3))
    a[1, 2] = np.nan
    with pytest.raises(ValidationError, match=r"\(1, 2\)"):
        write_tensor(a, tmp_path / "bad.negft")
    assert not (tmp_path / "bad.negft").exists()


def test_corrupt_and_missing(tmp_path):
    with pytest.raises(ValidationError):
        decode_tensor(b"garbage")
    good = write_tensor(np.ones(3), tmp_path / "x.negft").read_bytes()
    with pytest.raises(ValidationError):
        decode_tensor(good[:-1])
    with pytest.raises(ArtifactIOError, match="nope"):
        read_tensor(tmp_path / "nope.negft")


def test_csv_format(tmp_path):
    v = 0.1 + 0.2
    p = write_csv(tmp_path / "a.csv", ["x", "n", "s"], [(v, 3, "c"), (np.float64(1e-300), np.int64(-1), "v")])
    raw = p.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "x,n,s"
    assert float(lines[1].split(",")[0]) == v
    assert lines[1] == "0.30000000000000004,3,c"
    assert lines[2] == "1e-300,-1,v"
    assert raw.endswith(b"\n")
    with pytest.raises(ValidationError):
        csv_text(["x"], [(float("inf"),)])


def test_sha256(tmp_path):
    p = tmp_path / "f"
    p.write_bytes(b"abc")
    assert sha256_file(p) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def test_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ArtifactIOError, match="file"):
        write_csv(blocker / "sub" / "a.csv", ["x"], [])
