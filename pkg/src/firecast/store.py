"""Directory-layout chunked array store, a strict subset of the Zarr v2 format.

Layout on disk::

    <root>/.zgroup                   {"zarr_format": 2}
    <root>/.zattrs                   free-form group attributes (optional)
    <root>/<var>/.zarray             array metadata (subset: see below)
    <root>/<var>/.zattrs             per-array attributes (optional)
    <root>/<var>/<t>.<y>.<x>         raw chunk bytes

The subset is pinned so files stay bit-exact and third-party Zarr readers can
open them: dtype ``<f4``, C order, ``compressor: null``, ``filters: null``,
fill value NaN (encoded ``"NaN"``). Chunk files always hold the full chunk;
overhang past the array edge is fill value. Metadata documents are UTF-8 JSON
with sorted keys and 4-space indentation.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ZARR_FORMAT = 2
SUPPORTED_DTYPE = "<f4"
ITEM_SIZE = 4


class StoreError(Exception):
    """Base class for store failures."""


class StoreConflictError(StoreError):
    """Array already exists with a different spec."""


class UnsupportedCompressorError(StoreError):
    """Metadata declares a compressor; only null is readable."""


class RegionAlignmentError(StoreError):
    """Write region not aligned to chunk boundaries."""


class RegionRangeError(StoreError):
    """Region extends outside the array shape."""


def _encode_fill(value):
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    return value


def _decode_fill(token):
    if token == "NaN":
        return float("nan")
    if token == "Infinity":
        return float("inf")
    if token == "-Infinity":
        return float("-inf")
    return float(token)


def _dump_json(document):
    return json.dumps(document, indent=4, sort_keys=True) + "\n"


@dataclass(frozen=True)
class ArraySpec:
    """Shape/chunking contract for one stored array."""

    name: str
    shape: tuple
    chunks: tuple
    dtype: str = SUPPORTED_DTYPE
    fill_value: float = float("nan")
    order: str = "C"

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "chunks", tuple(int(c) for c in self.chunks))
        if not self.name or "/" in self.name or self.name.startswith("."):
            raise ValueError(f"invalid array name {self.name!r}")
        if self.dtype != SUPPORTED_DTYPE:
            raise ValueError(f"unsupported dtype {self.dtype!r}; only {SUPPORTED_DTYPE}")
        if self.order != "C":
            raise ValueError("only C order is supported")
        if len(self.shape) != len(self.chunks) or not self.shape:
            raise ValueError("shape and chunks must be non-empty and of equal rank")
        for s, c in zip(self.shape, self.chunks):
            if s <= 0 or c <= 0 or c > s:
                raise ValueError(f"invalid chunks {self.chunks} for shape {self.shape}")

    @property
    def chunk_grid(self):
        return tuple(-(-s // c) for s, c in zip(self.shape, self.chunks))

    @property
    def chunk_bytes(self):
        return int(np.prod(self.chunks)) * ITEM_SIZE

    def to_metadata(self):
        return {
            "chunks": list(self.chunks),
            "compressor": None,
            "dtype": self.dtype,
            "fill_value": _encode_fill(self.fill_value),
            "filters": None,
            "order": self.order,
            "shape": list(self.shape),
            "zarr_format": ZARR_FORMAT,
        }

    @classmethod
    def from_metadata(cls, name, meta):
        if meta.get("zarr_format") != ZARR_FORMAT:
            raise StoreError(f"unsupported zarr_format {meta.get('zarr_format')!r}")
        if meta.get("compressor") is not None:
            raise UnsupportedCompressorError(
                f"array {name!r} uses compressor {meta['compressor']!r}; only null is supported"
            )
        if meta.get("filters") is not None:
            raise StoreError(f"array {name!r} uses filters; only null is supported")
        return cls(
            name=name,
            shape=tuple(meta["shape"]),
            chunks=tuple(meta["chunks"]),
            dtype=meta["dtype"],
            fill_value=_decode_fill(meta["fill_value"]),
            order=meta["order"],
        )


def _specs_equal(a, b):
    if (a.name, a.shape, a.chunks, a.dtype, a.order) != (b.name, b.shape, b.chunks, b.dtype, b.order):
        return False
    return (math.isnan(a.fill_value) and math.isnan(b.fill_value)) or a.fill_value == b.fill_value


def _atomic_write(path: Path, data: bytes):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class ZarrArray:
    """Handle for one array; shareable across workers (no mutable state)."""

    def __init__(self, path, spec):
        self.path = Path(path)
        self.spec = spec

    def chunk_key(self, chunk_index):
        return ".".join(str(i) for i in chunk_index)

    def chunk_path(self, chunk_index):
        return self.path / self.chunk_key(chunk_index)

    def _full_chunk(self):
        return np.full(self.spec.chunks, self.spec.fill_value, dtype="<f4")

    def read_chunk(self, chunk_index):
        """Whole chunk, fill value where never written."""
        path = self.chunk_path(chunk_index)
        if not path.exists():
            return self._full_chunk()
        raw = path.read_bytes()
        if len(raw) != self.spec.chunk_bytes:
            raise StoreError(f"chunk {path} has {len(raw)} bytes, expected {self.spec.chunk_bytes}")
        return np.frombuffer(raw, dtype="<f4").reshape(self.spec.chunks).copy()

    def write_chunk(self, chunk_index, block):
        block = np.ascontiguousarray(block, dtype="<f4")
        if block.shape != self.spec.chunks:
            raise RegionAlignmentError(f"chunk block shape {block.shape} != chunks {self.spec.chunks}")
        _atomic_write(self.chunk_path(chunk_index), block.tobytes(order="C"))

    def _check_region(self, offsets, extents):
        offsets = tuple(int(o) for o in offsets)
        extents = tuple(int(e) for e in extents)
        if len(offsets) != len(self.spec.shape) or len(extents) != len(self.spec.shape):
            raise RegionRangeError("region rank does not match array rank")
        for o, e, s in zip(offsets, extents, self.spec.shape):
            if o < 0 or e < 0 or o + e > s:
                raise RegionRangeError(f"region {offsets}+{extents} outside shape {self.spec.shape}")
        return offsets, extents

    def write_region(self, offsets, block):
        """Write a chunk-aligned region (offsets on chunk boundaries; the far
        edge of each dimension on a boundary or at the array edge)."""
        block = np.asarray(block, dtype="<f4")
        offsets, extents = self._check_region(offsets, block.shape)
        for o, e, c, s in zip(offsets, block.shape, self.spec.chunks, self.spec.shape):
            if o % c != 0 or ((o + e) % c != 0 and o + e != s):
                raise RegionAlignmentError(
                    f"write region {offsets}+{tuple(block.shape)} not chunk-aligned to {self.spec.chunks}"
                )
        grid_lo = tuple(o // c for o, c in zip(offsets, self.spec.chunks))
        grid_hi = tuple(-(-(o + e) // c) for o, e, c in zip(offsets, extents, self.spec.chunks))
        for chunk_index in np.ndindex(*[hi - lo for lo, hi in zip(grid_lo, grid_hi)]):
            ci = tuple(lo + i for lo, i in zip(grid_lo, chunk_index))
            chunk = self._full_chunk()
            src, dst = [], []
            for d, (i, c, o, e, s) in enumerate(
                zip(ci, self.spec.chunks, offsets, extents, self.spec.shape)
            ):
                c0 = i * c
                span = min(c, s - c0)  # valid extent of this chunk
                src.append(slice(c0 - o, c0 - o + span))
                dst.append(slice(0, span))
            chunk[tuple(dst)] = block[tuple(src)]
            self.write_chunk(ci, chunk)

    def read_region(self, offsets, extents):
        offsets, extents = self._check_region(offsets, extents)
        out = np.empty(extents, dtype="<f4")
        grid_lo = tuple(o // c for o, c in zip(offsets, self.spec.chunks))
        grid_hi = tuple(-(-(o + e) // c) if e else o // c + 1 for o, e, c in zip(offsets, extents, self.spec.chunks))
        if any(e == 0 for e in extents):
            return out
        for chunk_index in np.ndindex(*[hi - lo for lo, hi in zip(grid_lo, grid_hi)]):
            ci = tuple(lo + i for lo, i in zip(grid_lo, chunk_index))
            chunk = self.read_chunk(ci)
            src, dst = [], []
            for i, c, o, e in zip(ci, self.spec.chunks, offsets, extents):
                c0 = i * c
                lo = max(c0, o)
                hi = min(c0 + c, o + e)
                src.append(slice(lo - c0, hi - c0))
                dst.append(slice(lo - o, hi - o))
            out[tuple(dst)] = chunk[tuple(src)]
        return out

    def read_full(self):
        return self.read_region((0,) * len(self.spec.shape), self.spec.shape)

    def read_attrs(self):
        path = self.path / ".zattrs"
        if not path.exists():
            return {}
        return json.loads(path.read_text(encoding="utf-8"))

    def write_attrs(self, attrs):
        _atomic_write(self.path / ".zattrs", _dump_json(attrs).encode("utf-8"))


class ZarrStore:
    """Group directory holding arrays; create once, then share handles freely."""

    def __init__(self, root):
        self.root = Path(root)

    @classmethod
    def create(cls, root, attrs=None, exist_ok=True):
        store = cls(root)
        store.root.mkdir(parents=True, exist_ok=exist_ok)
        marker = store.root / ".zgroup"
        if not marker.exists():
            _atomic_write(marker, _dump_json({"zarr_format": ZARR_FORMAT}).encode("utf-8"))
        if attrs is not None:
            store.write_attrs(attrs)
        return store

    @classmethod
    def open(cls, root):
        store = cls(root)
        marker = store.root / ".zgroup"
        if not marker.exists():
            raise StoreError(f"{root} is not a store (missing .zgroup)")
        meta = json.loads(marker.read_text(encoding="utf-8"))
        if meta.get("zarr_format") != ZARR_FORMAT:
            raise StoreError(f"unsupported zarr_format {meta.get('zarr_format')!r}")
        return store

    def read_attrs(self):
        path = self.root / ".zattrs"
        if not path.exists():
            return {}
        return json.loads(path.read_text(encoding="utf-8"))

    def write_attrs(self, attrs):
        _atomic_write(self.root / ".zattrs", _dump_json(attrs).encode("utf-8"))

    def array_names(self):
        return sorted(
            p.name for p in self.root.iterdir() if p.is_dir() and (p / ".zarray").exists()
        )

    def has_array(self, name):
        return (self.root / name / ".zarray").exists()

    def create_array(self, spec, attrs=None):
        """Create (or reopen, if the spec matches exactly) an array."""
        path = self.root / spec.name
        meta_path = path / ".zarray"
        if meta_path.exists():
            existing = ArraySpec.from_metadata(spec.name, json.loads(meta_path.read_text(encoding="utf-8")))
            if not _specs_equal(existing, spec):
                raise StoreConflictError(f"array {spec.name!r} exists with a different spec")
        else:
            path.mkdir(parents=True, exist_ok=True)
            _atomic_write(meta_path, _dump_json(spec.to_metadata()).encode("utf-8"))
        handle = ZarrArray(path, spec)
        if attrs is not None:
            handle.write_attrs(attrs)
        return handle

    def open_array(self, name):
        meta_path = self.root / name / ".zarray"
        if not meta_path.exists():
            raise StoreError(f"array {name!r} not found in {self.root}")
        spec = ArraySpec.from_metadata(name, json.loads(meta_path.read_text(encoding="utf-8")))
        return ZarrArray(self.root / name, spec)


def create_array(store_path, spec, attrs=None):
    """Create an array inside (an existing or new) store directory."""
    store = ZarrStore.create(store_path)
    return store.create_array(spec, attrs=attrs)


def default_gridded_spec(name, n_time, grid):
    """One whole global field per timestep per chunk."""
    return ArraySpec(name=name, shape=(n_time, grid.n_lat, grid.n_lon), chunks=(1, grid.n_lat, grid.n_lon))


def default_series_spec(name, n_time):
    return ArraySpec(name=name, shape=(n_time,), chunks=(n_time,))


def default_static_spec(name, grid):
    return ArraySpec(name=name, shape=(grid.n_lat, grid.n_lon), chunks=(grid.n_lat, grid.n_lon))
