"""Versioned binary checkpoints for model parameters and optimizer state.

Layout: 8-byte magic (format name + version), a length-prefixed JSON header
describing the variant, architecture and blob table, then the raw float64
little-endian blobs in header order, and a trailing CRC32 of everything
before it. Loading validates magic, CRC, and every declared shape, so a
flipped byte anywhere fails loudly rather than producing a subtly wrong
model. save(load(x)) reproduces the bytes exactly.
"""

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"BRCK0001"


@dataclass
class Checkpoint:
    variant: str
    variant_config: dict
    params: dict                      # name -> float64 array, insertion order
    optimizer: dict = None            # {"scalars": {...}, "acc": {name: array}}
    meta: dict = field(default_factory=dict)


def _blob_table(arrays):
    return [{"name": name, "shape": list(arr.shape)} for name, arr in arrays.items()]


def serialize_checkpoint(ckpt):
    """Checkpoint -> bytes."""
    params = {name: np.asarray(a, dtype=np.float64) for name, a in ckpt.params.items()}
    header = {
        "variant": ckpt.variant,
        "variant_config": ckpt.variant_config,
        "meta": ckpt.meta,
        "params": _blob_table(params),
        "optimizer": None,
    }
    opt_arrays = {}
    if ckpt.optimizer is not None:
        opt_arrays = {name: np.asarray(a, dtype=np.float64)
                      for name, a in ckpt.optimizer["acc"].items()}
        header["optimizer"] = {
            "scalars": ckpt.optimizer["scalars"],
            "acc": _blob_table(opt_arrays),
        }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = bytearray()
    body += MAGIC
    body += struct.pack("<I", len(header_bytes))
    body += header_bytes
    for arr in params.values():
        body += arr.astype("<f8").tobytes()
    for arr in opt_arrays.values():
        body += arr.astype("<f8").tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    return bytes(body)


def deserialize_checkpoint(blob):
    """bytes -> Checkpoint; rejects corruption with the failing location."""
    if len(blob) < len(MAGIC) + 8:
        raise ValueError("checkpoint truncated: shorter than fixed header")
    if blob[:len(MAGIC)] != MAGIC:
        raise ValueError(f"bad checkpoint magic {blob[:len(MAGIC)]!r}")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise ValueError("checkpoint CRC mismatch: file is corrupt")
    off = len(MAGIC)
    (hlen,) = struct.unpack("<I", blob[off:off + 4])
    off += 4
    header = json.loads(blob[off:off + hlen].decode("utf-8"))
    off += hlen

    def take(table, section):
        nonlocal off
        arrays = {}
        for item in table:
            shape = tuple(item["shape"])
            nbytes = int(np.prod(shape, dtype=np.int64)) * 8 if shape else 8
            raw = blob[off:off + nbytes]
            if len(raw) != nbytes:
                raise ValueError(f"checkpoint truncated in {section} blob {item['name']!r}")
            arrays[item["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
            off += nbytes
        return arrays

    params = take(header["params"], "parameter")
    optimizer = None
    if header["optimizer"] is not None:
        acc = take(header["optimizer"]["acc"], "optimizer")
        optimizer = {"scalars": header["optimizer"]["scalars"], "acc": acc}
    if off != len(blob) - 4:
        raise ValueError("checkpoint has trailing bytes after declared blobs")
    return Checkpoint(variant=header["variant"],
                      variant_config=header["variant_config"],
                      params=params, optimizer=optimizer, meta=header["meta"])


def save_checkpoint(path, ckpt):
    Path(path).write_bytes(serialize_checkpoint(ckpt))


def load_checkpoint(path):
    return deserialize_checkpoint(Path(path).read_bytes())
