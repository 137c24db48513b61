"""Binary weight container.

Layout (all integers uint32 little-endian)::

    b"IIRW" | version | tensor count
    per tensor: name length | UTF-8 name | rank | dims... | float64 LE payload
"""

import struct
from pathlib import Path

import numpy as np

from .errors import ParseError, UnsupportedFormatError
from .network import UnfoldedModel

MAGIC = b"IIRW"
VERSION = 1
_U32 = struct.Struct("<I")


def encode_tensors(tensors):
    chunks = [MAGIC, _U32.pack(VERSION), _U32.pack(len(tensors))]
    for name, value in tensors.items():
        arr = np.asarray(value, dtype="<f8")
        raw = name.encode("utf-8")
        chunks += [_U32.pack(len(raw)), raw, _U32.pack(arr.ndim)]
        chunks += [_U32.pack(d) for d in arr.shape]
        chunks.append(arr.tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise ParseError(f"truncated {what}: need {n} bytes, {len(self.data) - self.pos} left", self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return _U32.unpack(self.take(4, what))[0]


def decode_tensors(data):
    reader = _Reader(data)
    if reader.take(4, "magic") != MAGIC:
        raise ParseError("bad magic, expected b'IIRW'", 0)
    version = reader.u32("version")
    if version != VERSION:
        raise UnsupportedFormatError(f"container version {version} unsupported (expected {VERSION})")
    count = reader.u32("tensor count")
    tensors = {}
    for _ in range(count):
        start = reader.pos
        raw = reader.take(reader.u32("name length"), "name")
        try:
            name = raw.decode("utf-8")
        except UnicodeDecodeError as err:
            raise ParseError("tensor name is not UTF-8", start + 4) from err
        if name in tensors:
            raise ParseError(f"duplicate tensor {name!r}", start)
        rank = reader.u32("rank")
        dims = tuple(reader.u32("dimension") for _ in range(rank))
        size = int(np.prod(dims, dtype=np.int64))
        payload = reader.take(8 * size, f"payload of {name!r}")
        tensors[name] = np.reshape(np.frombuffer(payload, dtype="<f8").astype(np.float64), dims)
    if reader.pos != len(data):
        raise ParseError("trailing bytes after last tensor", reader.pos)
    return tensors


def save_weights(model, path):
    params = model.params if isinstance(model, UnfoldedModel) else model
    Path(path).write_bytes(encode_tensors(params))


def load_weights(path, h_variant="main"):
    """Read a container and check it holds exactly one complete model."""
    return UnfoldedModel(decode_tensors(Path(path).read_bytes()), h_variant)
