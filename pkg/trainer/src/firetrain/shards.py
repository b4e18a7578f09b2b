"""Reader/writer for the patch shard container (the boundary contract).

Implemented against the documented byte layout: magic ``FCS1``, uint32-LE
header length, UTF-8 JSON header listing arrays (name, shape, dtype of
``<f4``/``<u1``/``<i4``, offset relative to the first payload byte), then raw
C-order payloads. Violations are rejected with the byte offset of the first
problem; the data engine owning the format is the source of truth.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"FCS1"
ALLOWED_DTYPES = ("<f4", "<u1", "<i4")


class ShardFormatError(ValueError):
    pass


def read_shard(path):
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ShardFormatError(f"{path}: file shorter than the fixed preamble (byte 0)")
    if raw[:4] != MAGIC:
        raise ShardFormatError(f"{path}: bad magic {raw[:4]!r} (byte 0)")
    header_len = int(np.frombuffer(raw[4:8], dtype="<u4")[0])
    if 8 + header_len > len(raw):
        raise ShardFormatError(f"{path}: header overruns the file (byte 4)")
    try:
        header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ShardFormatError(f"{path}: malformed JSON header (byte 8): {exc}") from exc
    base = 8 + header_len
    arrays = {}
    cursor = 0
    for entry in header.get("arrays", []):
        dtype = entry.get("dtype")
        if dtype not in ALLOWED_DTYPES:
            raise ShardFormatError(f"{path}: dtype {dtype!r} not allowed (byte 8)")
        if entry["offset"] != cursor:
            raise ShardFormatError(
                f"{path}: array {entry['name']!r} at offset {entry['offset']}, expected {cursor} "
                f"(byte {base + cursor})"
            )
        count = int(np.prod(entry["shape"], dtype=np.int64))
        nbytes = count * int(dtype[-1])
        if base + cursor + nbytes > len(raw):
            raise ShardFormatError(f"{path}: array {entry['name']!r} overruns the file (byte {base + cursor})")
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=base + cursor)
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
        cursor += nbytes
    if base + cursor != len(raw):
        raise ShardFormatError(f"{path}: {len(raw) - base - cursor} trailing bytes (byte {base + cursor})")
    return arrays


def write_shard(path, arrays):
    entries = []
    payloads = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        dtype = arr.dtype.newbyteorder("<").str.replace("|", "<")
        if dtype not in ALLOWED_DTYPES:
            raise ValueError(f"array {name!r} has unsupported dtype {arr.dtype}")
        payload = arr.astype(dtype, copy=False).tobytes(order="C")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dtype, "offset": offset})
        payloads.append(payload)
        offset += len(payload)
    header = json.dumps({"arrays": entries}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(len(header)).tobytes())
        fh.write(header)
        for payload in payloads:
            fh.write(payload)


def load_manifest(lead_dir):
    with open(Path(lead_dir) / "manifest.json", encoding="utf-8") as fh:
        return json.load(fh)


def iter_split(lead_dir, split, manifest=None):
    lead_dir = Path(lead_dir)
    manifest = manifest or load_manifest(lead_dir)
    for name in manifest["splits"][split]["shards"]:
        yield name, read_shard(lead_dir / name)
