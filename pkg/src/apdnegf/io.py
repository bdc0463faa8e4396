"""Artifact writers: binary tensor format and round-trip CSV."""

from __future__ import annotations

import csv
import hashlib
import io as _io
import os
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import NegfError, ValidationError

MAGIC = b"NEGFT1\0"
DTYPE_TAGS = {np.dtype("<f8"): 1, np.dtype("<c16"): 2}
TAG_DTYPES = {v: k for k, v in DTYPE_TAGS.items()}


class ArtifactIOError(NegfError, OSError):
    """Reading or writing an artifact failed."""


def encode_tensor(array) -> bytes:
    a = np.asarray(array)
    if np.iscomplexobj(a):
        a = a.astype("<c16")
    elif np.issubdtype(a.dtype, np.number) or a.dtype == bool:
        a = a.astype("<f8")
    else:
        raise ValidationError(f"unsupported tensor dtype {a.dtype}")
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(a))[0]
        raise ValidationError(f"refusing to write non-finite tensor value at index {tuple(int(i) for i in bad)}")
    header = MAGIC + struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape) + struct.pack("<B", DTYPE_TAGS[a.dtype])
    return header + np.ascontiguousarray(a).tobytes(order="C")


def decode_tensor(data: bytes) -> np.ndarray:
    if not data.startswith(MAGIC):
        raise ValidationError("not a tensor file (bad magic)")
    off = len(MAGIC)
    (rank,) = struct.unpack_from("<I", data, off)
    off += 4
    dims = struct.unpack_from(f"<{rank}Q", data, off)
    off += 8 * rank
    (tag,) = struct.unpack_from("<B", data, off)
    off += 1
    if tag not in TAG_DTYPES:
        raise ValidationError(f"unknown tensor dtype tag {tag}")
    dt = TAG_DTYPES[tag]
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    if len(data) - off != count * dt.itemsize:
        raise ValidationError("tensor payload size does not match its header")
    return np.frombuffer(data, dtype=dt, count=count, offset=off).reshape(dims).copy()


def _atomic_write(path, payload: bytes) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def write_tensor(array, path) -> Path:
    return _atomic_write(path, encode_tensor(array))


def read_tensor(path) -> np.ndarray:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return decode_tensor(data)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        if not np.isfinite(v):
            raise ValidationError(f"refusing to write non-finite CSV value {v}")
        return format(float(v), ".17g")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """CSV with a header row, ``\\n`` line endings and 17 significant digits."""
    return _atomic_write(path, csv_text(header, rows).encode())


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
