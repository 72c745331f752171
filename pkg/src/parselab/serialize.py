"""Versioned binary container for trained models.

Layout: bytes "PLMB" | u32 version | u64 header length | JSON header
(kind, metadata, array manifest) | raw array payloads in manifest order.
Writes are deterministic: the manifest is sorted by array name and the JSON
uses sorted keys, so identical models produce identical bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"PLMB"
VERSION = 1


class ModelFormatError(ValueError):
    pass


def save_blob(path, kind: str, meta: dict, arrays: dict) -> None:
    names = sorted(arrays)
    manifest = []
    payloads = []
    for name in names:
        array = np.ascontiguousarray(arrays[name])
        dtype = array.dtype.newbyteorder("<")
        array = array.astype(dtype, copy=False)
        manifest.append({"name": name, "dtype": dtype.str, "shape": list(array.shape)})
        payloads.append(array.tobytes(order="C"))
    header = json.dumps(
        {"kind": kind, "meta": meta, "arrays": manifest},
        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<IQ", VERSION, len(header)))
        handle.write(header)
        for payload in payloads:
            handle.write(payload)


def load_blob(path):
    with open(path, "rb") as handle:
        magic = handle.read(4)
        if magic != MAGIC:
            raise ModelFormatError(f"bad magic {magic!r}")
        raw = handle.read(12)
        if len(raw) != 12:
            raise ModelFormatError("truncated header")
        version, header_len = struct.unpack("<IQ", raw)
        if version != VERSION:
            raise ModelFormatError(f"unsupported model version {version}")
        header = handle.read(header_len)
        if len(header) != header_len:
            raise ModelFormatError("truncated JSON header")
        info = json.loads(header.decode("utf-8"))
        arrays = {}
        for entry in info["arrays"]:
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            itemsize = np.dtype(entry["dtype"]).itemsize
            payload = handle.read(count * itemsize)
            if len(payload) != count * itemsize:
                raise ModelFormatError(f"truncated payload for {entry['name']}")
            arrays[entry["name"]] = np.frombuffer(
                payload, dtype=entry["dtype"]).reshape(entry["shape"]).copy()
    return info["kind"], info["meta"], arrays
