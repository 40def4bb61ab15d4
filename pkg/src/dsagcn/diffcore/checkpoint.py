"""Checkpoint container: JSON manifest header + raw little-endian blocks."""

import json
import struct

import numpy as np

MAGIC = b"DAckpt1\n"
FORMAT_VERSION = 1


def save_checkpoint(path, arrays, meta=None):
    """Write name -> ndarray pairs with a versioned manifest.

    arrays: dict of name -> numpy array (params and buffers alike).
    meta: JSON-serializable extras stored in the header.
    """
    entries = []
    offset = 0
    blobs = []
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dtype = "<f8" if arr.dtype == np.float64 else "<f4"
        raw = arr.astype(dtype).tobytes()
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": dtype,
            "offset": offset,
            "nbytes": len(raw),
        })
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({
        "format_version": FORMAT_VERSION,
        "meta": meta or {},
        "entries": entries,
    }).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for raw in blobs:
            f.write(raw)


def load_checkpoint(path):
    """Read a checkpoint back; every shape is validated against the manifest."""
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (header_len,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(header_len))
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(
                f"{path}: unsupported format version {header.get('format_version')}")
        payload = f.read()
    arrays = {}
    for entry in header["entries"]:
        shape = tuple(entry["shape"])
        dtype = np.dtype(entry["dtype"])
        expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if entry["nbytes"] != expected:
            raise ValueError(
                f"{path}: entry {entry['name']} claims shape {shape} "
                f"but stores {entry['nbytes']} bytes (expected {expected})")
        start = entry["offset"]
        raw = payload[start:start + entry["nbytes"]]
        if len(raw) != entry["nbytes"]:
            raise ValueError(f"{path}: truncated block for {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    return arrays, header["meta"]
