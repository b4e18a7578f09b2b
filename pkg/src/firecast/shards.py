"""Binary shard container for patch samples.

Wire format (all little-endian)::

    bytes 0-3   magic "FCS1"
    bytes 4-7   uint32 header length H
    bytes 8-    UTF-8 JSON header of exactly H bytes
    then        raw array payloads

The header's ``arrays`` list gives, for each array: ``name``, ``shape``,
``dtype`` (one of ``<f4``, ``<u1``, ``<i4``) and ``offset`` in bytes relative
to the first payload byte (file offset ``8 + H``). Payloads are C-order with
no padding between them. Dataset shards carry ``inputs [N,C,P,P] <f4``,
``targets [N,P,P] <u1``, ``valid [N,P,P] <u1`` and ``meta [N,4] <i4``
(t_input, lead_steps, row0, col0); prediction shards carry ``preds
[N,P,P] <f4`` plus the same ``meta``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

SHARD_MAGIC = b"FCS1"
ALLOWED_DTYPES = ("<f4", "<u1", "<i4")
META_COLUMNS = ("t_input", "lead_steps", "row0", "col0")


class ShardFormatError(ValueError):
    """Malformed shard; message carries the byte offset of the violation."""


def write_shard(path, arrays):
    """Serialize named arrays in their given order; bit-exact round trip."""
    entries = []
    payloads = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        dtype = arr.dtype.newbyteorder("<").str.replace("|", "<")  # 1-byte types have no order
        if dtype not in ALLOWED_DTYPES:
            raise ValueError(f"array {name!r} has unsupported dtype {arr.dtype}")
        payload = arr.astype(dtype, copy=False).tobytes(order="C")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dtype, "offset": offset})
        payloads.append(payload)
        offset += len(payload)
    header = json.dumps({"arrays": entries}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(SHARD_MAGIC)
        fh.write(np.uint32(len(header)).tobytes())
        fh.write(header)
        for payload in payloads:
            fh.write(payload)


def _parse_header(raw, path):
    if len(raw) < 8:
        raise ShardFormatError(f"{path}: truncated before header length (byte 0)")
    if raw[:4] != SHARD_MAGIC:
        raise ShardFormatError(f"{path}: bad magic {raw[:4]!r} (byte 0)")
    header_len = int(np.frombuffer(raw[4:8], dtype="<u4")[0])
    if 8 + header_len > len(raw):
        raise ShardFormatError(f"{path}: header length {header_len} runs past EOF (byte 4)")
    try:
        header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ShardFormatError(f"{path}: header is not valid UTF-8 JSON (byte 8): {exc}") from exc
    if not isinstance(header, dict) or "arrays" not in header:
        raise ShardFormatError(f"{path}: header missing 'arrays' (byte 8)")
    return header, 8 + header_len


def validate_shard(path):
    """Structural validation; returns the parsed header on success."""
    raw = Path(path).read_bytes()
    header, payload_base = _parse_header(raw, path)
    cursor = 0
    for entry in header["arrays"]:
        for key in ("name", "shape", "dtype", "offset"):
            if key not in entry:
                raise ShardFormatError(f"{path}: array entry missing {key!r} (byte 8)")
        if entry["dtype"] not in ALLOWED_DTYPES:
            raise ShardFormatError(
                f"{path}: array {entry['name']!r} dtype {entry['dtype']!r} not in {ALLOWED_DTYPES} (byte 8)"
            )
        if entry["offset"] != cursor:
            raise ShardFormatError(
                f"{path}: array {entry['name']!r} offset {entry['offset']} != expected {cursor} "
                f"(byte {payload_base + cursor})"
            )
        itemsize = int(entry["dtype"][-1])
        n_bytes = int(np.prod(entry["shape"], dtype=np.int64)) * itemsize
        if payload_base + entry["offset"] + n_bytes > len(raw):
            raise ShardFormatError(
                f"{path}: array {entry['name']!r} runs past EOF (byte {payload_base + entry['offset']})"
            )
        cursor += n_bytes
    if payload_base + cursor != len(raw):
        raise ShardFormatError(f"{path}: {len(raw) - payload_base - cursor} trailing bytes (byte {payload_base + cursor})")
    return header


def read_shard(path):
    """Load all arrays from one shard file."""
    raw = Path(path).read_bytes()
    header, payload_base = _parse_header(raw, path)
    out = {}
    for entry in header["arrays"]:
        itemsize = int(entry["dtype"][-1])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        start = payload_base + entry["offset"]
        arr = np.frombuffer(raw, dtype=entry["dtype"], count=count, offset=start)
        out[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return out
