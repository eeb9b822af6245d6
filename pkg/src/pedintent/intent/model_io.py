"""Versioned flat-binary model files.

Layout: 8-byte magic ``PIGRU\\x00\\x01\\x00``, little-endian uint32 header
length, UTF-8 JSON header, then every tensor as little-endian float64 in
header order.
"""
import json
import struct

import numpy as np

from ..errors import FormatError
from ..io import atomic_write_bytes
from .gru import STREAMS, StackedGruModel

MAGIC = b"PIGRU\x00\x01\x00"
FORMAT_VERSION = 1


def _tensors(model):
    out = dict(model.parameters())
    out.update(model.buffers())
    return out


def save_model(model, path):
    tensors = _tensors(model)
    header = {
        "schema_version": FORMAT_VERSION,
        "hidden": model.hidden,
        "stream_dims": {s: int(model.stream_dims[s]) for s in STREAMS},
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in tensors.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in tensors.values())
    atomic_write_bytes(path, MAGIC + struct.pack("<I", len(blob)) + blob + payload)


def load_model(path, expect_dims=None, expect_hidden=None):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: not a pedintent model file")
    (hlen,) = struct.unpack_from("<I", data, len(MAGIC))
    start = len(MAGIC) + 4
    try:
        header = json.loads(data[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header") from exc
    if header.get("schema_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported model version {header.get('schema_version')}")
    dims = header["stream_dims"]
    hidden = header["hidden"]
    if expect_dims is not None and any(dims[s] != expect_dims[s] for s in STREAMS):
        raise FormatError(f"{path}: stream dimensions {dims} do not match {expect_dims}")
    if expect_hidden is not None and hidden != expect_hidden:
        raise FormatError(f"{path}: hidden size {hidden} does not match {expect_hidden}")
    model = StackedGruModel.create(dims, hidden, zero=True)
    target = _tensors(model)
    offset = start + hlen
    names = [t["name"] for t in header["tensors"]]
    if names != list(target):
        raise FormatError(f"{path}: tensor layout does not match this model version")
    for entry in header["tensors"]:
        arr = target[entry["name"]]
        if list(arr.shape) != entry["shape"]:
            raise FormatError(f"{path}: tensor {entry['name']} has shape {entry['shape']}, "
                              f"expected {list(arr.shape)}")
        n = arr.size * 8
        if offset + n > len(data):
            raise FormatError(f"{path}: truncated payload")
        arr[...] = np.frombuffer(data, dtype="<f8", count=arr.size, offset=offset).reshape(arr.shape)
        offset += n
    if offset != len(data):
        raise FormatError(f"{path}: trailing bytes after payload")
    return model
