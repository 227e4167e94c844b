"""Minimal binary container for named float32 tensors.

Byte layout (all integers little-endian)::

    magic      8 bytes   b"SEEDTNSR"
    version    u32       1
    meta_len   u32       length of the metadata text
    meta       bytes     UTF-8 ``key=value`` lines (may be empty)
    n_entries  u32
    entries    n_entries times:
                 name_len u32, name (UTF-8), dtype u32 (1 = float32),
                 rank u32, dims u64 * rank
    payload    row-major little-endian float32 data of every entry, in order

The file size must equal the header size plus the declared payload exactly.
"""

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import ContainerCorruptError, ContainerFormatError

__all__ = ["MAGIC", "VERSION", "write_container", "read_container", "read_metadata"]

MAGIC = b"SEEDTNSR"
VERSION = 1
DTYPE_FLOAT32 = 1
_LE_F32 = np.dtype("<f4")


def _encode_meta(meta):
    if not meta:
        return b""
    lines = []
    for k, v in meta.items():
        k, v = str(k), str(v)
        if "=" in k or "\n" in k or "\n" in v:
            raise ValueError(f"metadata key/value not representable: {k!r}")
        lines.append(f"{k}={v}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _to_float32(name, arr):
    arr = np.asarray(arr)
    out = np.asarray(arr, dtype=_LE_F32).copy(order="C")  # ascontiguousarray would promote 0-d to 1-d
    if arr.dtype.kind in "iub" and arr.size and not np.array_equal(out.astype(arr.dtype), arr):
        raise ValueError(f"integer tensor {name!r} is not exactly representable as float32")
    return out


def write_container(path, tensors, meta=None):
    """Write ``tensors`` (a name -> array mapping) to ``path``.

    The file is written to a temporary sibling and renamed, so readers never
    see a partial container.
    """
    header = bytearray(MAGIC)
    header += struct.pack("<I", VERSION)
    meta_bytes = _encode_meta(meta)
    header += struct.pack("<I", len(meta_bytes)) + meta_bytes
    header += struct.pack("<I", len(tensors))
    payloads = []
    for name, arr in tensors.items():
        if not isinstance(name, str) or not name:
            raise ValueError("tensor names must be non-empty strings")
        data = _to_float32(name, arr)
        raw_name = name.encode("utf-8")
        header += struct.pack("<I", len(raw_name)) + raw_name
        header += struct.pack("<II", DTYPE_FLOAT32, data.ndim)
        header += struct.pack(f"<{data.ndim}Q", *data.shape)
        payloads.append(data.tobytes(order="C"))

    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            for blob in payloads:
                fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise ContainerCorruptError(
                f"truncated container: {what} needs {n} bytes at offset {self.pos}, "
                f"file has {len(self.buf)}",
                offset=len(self.buf),
            )
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def _parse_header(buf):
    r = _Reader(buf)
    if len(buf) < len(MAGIC) or buf[: len(MAGIC)] != MAGIC:
        raise ContainerFormatError("not a tensor container (bad magic bytes)")
    r.pos = len(MAGIC)
    version = r.u32("version")
    if version != VERSION:
        raise ContainerFormatError(f"unsupported container version {version}")
    meta_text = bytes(r.take(r.u32("metadata length"), "metadata")).decode("utf-8")
    n_entries = r.u32("entry count")
    entries = []
    seen = set()
    for _ in range(n_entries):
        name = bytes(r.take(r.u32("name length"), "name")).decode("utf-8")
        if name in seen:
            raise ContainerFormatError(f"duplicate tensor name {name!r}")
        seen.add(name)
        dtype, rank = struct.unpack("<II", r.take(8, "dtype/rank"))
        if dtype != DTYPE_FLOAT32:
            raise ContainerFormatError(f"unsupported dtype code {dtype} for {name!r}")
        dims = struct.unpack(f"<{rank}Q", r.take(8 * rank, "dims")) if rank else ()
        entries.append((name, dims))
    meta = {}
    for line in meta_text.splitlines():
        if line:
            k, _, v = line.partition("=")
            meta[k] = v
    return meta, entries, r.pos


def read_metadata(path):
    """Metadata mapping stored in the header of a container."""
    meta, _, _ = _parse_header(memoryview(Path(path).read_bytes()))
    return meta


def read_container(path, with_meta=False):
    """Read every tensor of a container into a dict of float32 arrays.

    Sizes are validated against the file length before any payload is
    decoded; a mismatch raises :class:`ContainerCorruptError` carrying the
    byte offset where the data ends or overruns.
    """
    buf = memoryview(Path(path).read_bytes())
    meta, entries, offset = _parse_header(buf)
    sizes = [int(np.prod(dims, dtype=np.int64)) * 4 for _, dims in entries]
    expected = offset + sum(sizes)
    if expected != len(buf):
        kind = "truncated" if len(buf) < expected else "oversized"
        raise ContainerCorruptError(
            f"{kind} container: header declares {expected} bytes, file has {len(buf)} "
            f"(payload starts at offset {offset})",
            offset=min(expected, len(buf)),
        )
    out = {}
    for (name, dims), size in zip(entries, sizes):
        arr = np.frombuffer(buf[offset : offset + size], dtype=_LE_F32).reshape(dims)
        out[name] = arr.astype(np.float32)
        offset += size
    return (out, meta) if with_meta else out
