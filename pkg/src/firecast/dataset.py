"""Supervised patch dataset construction from a cube.

The pipeline binarizes the burned-area target, pairs inputs to targets at a
configurable lead (in steps), keeps only patches with at least one positive
pixel, splits by the *target* date's year, z-scores inputs with statistics
fitted on the training split alone, and exports shard files.

The retained (target step, tile) set is decided by the target alone, so it is
identical across leads except for samples whose input step would fall before
the axis start; those are dropped and counted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .grid import PatchGridSpec
from .shards import read_shard, write_shard
from .store import ZarrStore
from .variables import DEFAULT_INPUT_CHANNELS, DEFAULT_TARGET_VARIABLE, load_manifest

DEFAULT_LEADS = (1, 2, 4, 8)
SHARD_SIZE = 256


class DatasetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# core sample operations


def binarize_target(burned):
    """(target, valid) uint8 masks: positive burned area -> 1, NaN -> 0 and invalid."""
    burned = np.asarray(burned, dtype=np.float64)
    invalid = np.isnan(burned)
    target = (np.nan_to_num(burned, nan=0.0) > 0).astype(np.uint8)
    return target, (~invalid).astype(np.uint8)


def pair_lead(t_target, lead_steps):
    """Input step for a target step, or None when it would precede the axis."""
    t_input = t_target - lead_steps
    return t_input if t_input >= 0 else None


def filter_patches(targets):
    """Indices of patches with at least one positive pixel, plus a count report."""
    retained = [i for i, t in enumerate(targets) if bool(np.any(np.asarray(t) > 0))]
    return retained, {"total": len(targets), "retained": len(retained)}


@dataclass(frozen=True)
class SplitSpec:
    train_years: frozenset
    val_years: frozenset
    test_years: frozenset

    def __post_init__(self):
        object.__setattr__(self, "train_years", frozenset(self.train_years))
        object.__setattr__(self, "val_years", frozenset(self.val_years))
        object.__setattr__(self, "test_years", frozenset(self.test_years))
        all_years = [*self.train_years, *self.val_years, *self.test_years]
        if len(all_years) != len(set(all_years)):
            raise DatasetError("split year sets overlap")

    @classmethod
    def canonical(cls):
        """2002-2017 train, 2018 validation, 2019 test."""
        return cls(frozenset(range(2002, 2018)), frozenset({2018}), frozenset({2019}))

    @classmethod
    def for_axis(cls, axis):
        """Canonical years when covered; otherwise last year tests, the one
        before validates, the rest trains."""
        years = list(range(axis.start_year, axis.end_year + 1))
        if set(range(2002, 2020)).issubset(years):
            return cls.canonical()
        if len(years) < 3:
            raise DatasetError("need at least 3 years to split")
        return cls(frozenset(years[:-2]), frozenset({years[-2]}), frozenset({years[-1]}))

    def label(self, year):
        if year in self.train_years:
            return "train"
        if year in self.val_years:
            return "val"
        if year in self.test_years:
            return "test"
        return None

    def to_dict(self):
        return {
            "train_years": sorted(self.train_years),
            "val_years": sorted(self.val_years),
            "test_years": sorted(self.test_years),
        }


def assign_split(t_target, spec: SplitSpec, axis):
    """Split label keyed on the year of the target period's start date."""
    return spec.label(axis.year_of_step(t_target))


# ---------------------------------------------------------------------------
# normalization


class ChannelNormalizer(BaseEstimator, TransformerMixin):
    """Per-channel z-scoring with NaN-aware statistics; NaN maps to 0 after.

    Fit on training inputs shaped (n, channels, h, w); statistics ignore NaN
    pixels. Transforming mean-imputes NaN (exactly 0 after scaling).
    """

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        sums = np.nansum(X, axis=(0, 2, 3))
        sumsq = np.nansum(X * X, axis=(0, 2, 3))
        count = np.sum(~np.isnan(X), axis=(0, 2, 3))
        return self._finalize(sums, sumsq, count)

    def _finalize(self, sums, sumsq, count):
        if np.any(count == 0):
            raise DatasetError("channel with no finite training values")
        mean = sums / count
        var = sumsq / count - mean * mean
        if np.any(var <= 0):
            raise DatasetError("degenerate (constant) channel in training data")
        self.mean_ = mean
        self.scale_ = np.sqrt(var)
        return self

    @classmethod
    def from_moments(cls, sums, sumsq, count):
        return cls()._finalize(np.asarray(sums), np.asarray(sumsq), np.asarray(count))

    @classmethod
    def from_stats(cls, mean, std):
        normalizer = cls()
        normalizer.mean_ = np.asarray(mean, dtype=np.float64)
        normalizer.scale_ = np.asarray(std, dtype=np.float64)
        return normalizer

    def transform(self, X):
        if not hasattr(self, "mean_"):
            raise NotFittedError("ChannelNormalizer is not fitted")
        X = np.asarray(X, dtype=np.float64)
        shape = (1, -1) + (1,) * (X.ndim - 2)
        z = (X - self.mean_.reshape(shape)) / self.scale_.reshape(shape)
        return np.nan_to_num(z, nan=0.0, copy=False)


# ---------------------------------------------------------------------------
# extraction pipeline


class _ShardWriter:
    def __init__(self, out_dir, split, shard_size):
        self.out_dir = Path(out_dir)
        self.split = split
        self.shard_size = shard_size
        self.buffers = {"inputs": [], "targets": [], "valid": [], "meta": []}
        self.files = []
        self.samples = 0

    def add(self, inputs, target, valid, meta):
        self.buffers["inputs"].append(inputs)
        self.buffers["targets"].append(target)
        self.buffers["valid"].append(valid)
        self.buffers["meta"].append(meta)
        self.samples += 1
        if len(self.buffers["meta"]) >= self.shard_size:
            self.flush()

    def flush(self):
        if not self.buffers["meta"]:
            return
        name = f"{self.split}_{len(self.files):05d}.fcs"
        write_shard(
            self.out_dir / name,
            {
                "inputs": np.stack(self.buffers["inputs"]).astype("<f4"),
                "targets": np.stack(self.buffers["targets"]).astype("<u1"),
                "valid": np.stack(self.buffers["valid"]).astype("<u1"),
                "meta": np.stack(self.buffers["meta"]).astype("<i4"),
            },
        )
        self.files.append(name)
        for key in self.buffers:
            self.buffers[key].clear()


class _StepReader:
    """Single-step cache over cube arrays; extraction walks steps in order."""

    def __init__(self, handles, pad_shape):
        self.handles = handles
        self.pad_shape = pad_shape
        self.step = None
        self.canvas = None

    def read(self, step):
        if step != self.step:
            n_lat, n_lon = self.handles[0].spec.shape[1:]
            canvas = np.full((len(self.handles),) + self.pad_shape, np.nan, dtype=np.float32)
            for i, handle in enumerate(self.handles):
                canvas[i, :n_lat, :n_lon] = handle.read_region((step, 0, 0), (1, n_lat, n_lon))[0]
            self.step = step
            self.canvas = canvas
        return self.canvas


def extract_dataset(
    store_root,
    out_dir,
    leads=DEFAULT_LEADS,
    channels=None,
    target_variable=DEFAULT_TARGET_VARIABLE,
    split_spec=None,
    patch_spec=None,
    shard_size=SHARD_SIZE,
    include_invalid=False,
):
    """Build one shard dataset per lead under ``out_dir/lead_<L>/``.

    Returns the per-lead manifest dicts.
    """
    store = ZarrStore.open(store_root)
    cube = load_manifest(store)
    axis, grid = cube.axis, cube.grid
    channels = tuple(channels) if channels else DEFAULT_INPUT_CHANNELS
    patch_spec = patch_spec or PatchGridSpec()
    split_spec = split_spec or SplitSpec.for_axis(axis)
    origins = patch_spec.tile_origins(grid)
    p = patch_spec.patch_px
    pad_shape = patch_spec.padded_shape(grid)

    missing = [c for c in (*channels, target_variable) if not store.has_array(c)]
    if missing:
        raise DatasetError(f"cube is missing variables: {missing}")

    target_handle = store.open_array(target_variable)
    input_handles = [store.open_array(c) for c in channels]

    # decide retained (t_target, tile) pairs once; the set is lead-independent
    retained = {}
    filter_report = {s: {"total": 0, "retained": 0} for s in ("train", "val", "test")}
    for t_target in range(len(axis)):
        split = assign_split(t_target, split_spec, axis)
        if split is None:
            continue
        field = np.full(pad_shape, np.nan, dtype=np.float64)
        field[: grid.n_lat, : grid.n_lon] = target_handle.read_region(
            (t_target, 0, 0), (1, grid.n_lat, grid.n_lon)
        )[0]
        tiles = []
        for tile_idx, (r0, c0) in enumerate(origins):
            target, valid = binarize_target(field[r0 : r0 + p, c0 : c0 + p])
            if include_invalid:
                in_grid = np.zeros((p, p), dtype=np.uint8)
                rows = max(0, min(p, grid.n_lat - r0))
                cols = max(0, min(p, grid.n_lon - c0))
                in_grid[:rows, :cols] = 1
                valid = in_grid
            filter_report[split]["total"] += 1
            if target.any():
                filter_report[split]["retained"] += 1
                tiles.append((tile_idx, target, valid))
        if tiles:
            retained[t_target] = (split, tiles)

    manifests = []
    for lead in leads:
        lead_dir = Path(out_dir) / f"lead_{lead}"
        lead_dir.mkdir(parents=True, exist_ok=True)
        reader = _StepReader(input_handles, pad_shape)
        underflow = 0
        samples = []
        for t_target in sorted(retained):
            split, tiles = retained[t_target]
            t_input = pair_lead(t_target, lead)
            if t_input is None:
                underflow += len(tiles)
                continue
            samples.append((t_target, t_input, split, tiles))

        # training statistics over finite input values only
        sums = np.zeros(len(channels))
        sumsq = np.zeros(len(channels))
        count = np.zeros(len(channels), dtype=np.int64)
        for t_target, t_input, split, tiles in samples:
            if split != "train":
                continue
            canvas = reader.read(t_input).astype(np.float64)
            for tile_idx, _, _ in tiles:
                r0, c0 = origins[tile_idx]
                patch = canvas[:, r0 : r0 + p, c0 : c0 + p]
                finite = ~np.isnan(patch)
                sums += np.where(finite, patch, 0.0).sum(axis=(1, 2))
                sumsq += np.where(finite, patch * patch, 0.0).sum(axis=(1, 2))
                count += finite.sum(axis=(1, 2))
        normalizer = ChannelNormalizer.from_moments(sums, sumsq, count)

        writers = {s: _ShardWriter(lead_dir, s, shard_size) for s in ("train", "val", "test")}
        reader = _StepReader(input_handles, pad_shape)
        for t_target, t_input, split, tiles in samples:
            canvas = reader.read(t_input)
            for tile_idx, target, valid in tiles:
                r0, c0 = origins[tile_idx]
                patch = normalizer.transform(canvas[None, :, r0 : r0 + p, c0 : c0 + p])[0]
                meta = np.array([t_input, lead, r0, c0], dtype=np.int32)
                writers[split].add(patch.astype("<f4"), target, valid, meta)
        for writer in writers.values():
            writer.flush()

        manifest = {
            "format": "FCS1",
            "patch_px": p,
            "channels": list(channels),
            "target_variable": target_variable,
            "lead_steps": lead,
            "include_invalid": bool(include_invalid),
            "grid": {"n_lat": grid.n_lat, "n_lon": grid.n_lon, "resolution_deg": grid.resolution_deg},
            "time_axis": {"start_year": axis.start_year, "end_year": axis.end_year},
            "splits": {
                s: {"shards": writers[s].files, "samples": writers[s].samples}
                for s in ("train", "val", "test")
            },
            "split_years": split_spec.to_dict(),
            "normalization": {
                "mean": [float(v) for v in normalizer.mean_],
                "std": [float(v) for v in normalizer.scale_],
            },
            "filter_report": filter_report,
            "underflow_dropped": underflow,
        }
        with open(lead_dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        manifests.append(manifest)
    return manifests


# ---------------------------------------------------------------------------
# consumption


def load_dataset_manifest(lead_dir):
    with open(Path(lead_dir) / "manifest.json", encoding="utf-8") as fh:
        return json.load(fh)


def iter_split(lead_dir, split, manifest=None):
    """Yield (shard_path, arrays) for a split, in manifest order."""
    lead_dir = Path(lead_dir)
    manifest = manifest or load_dataset_manifest(lead_dir)
    for name in manifest["splits"][split]["shards"]:
        path = lead_dir / name
        yield path, read_shard(path)
