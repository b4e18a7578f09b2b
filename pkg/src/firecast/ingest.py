"""Harmonization of raw local inputs into cube variables.

Three documented input contracts keep ingestion testable offline:

* gridded sources: a raw little-endian float32 raster stack plus a JSON
  sidecar (shape, resolution, start date) — see :func:`read_raster`;
* burned-event sources: CSV with ``lat,lon,date,area_ha`` columns;
* scalar series: CSV with ``date,value`` columns, forward-filled to daily.

Temporal compositing runs first (on the native grid), spatial resampling
second. NaN policy per rule: mean/min/max ignore NaN; sum treats NaN as zero
unless every contributing value is NaN, in which case the result is NaN.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import GeoGrid, GridDomainError, TimeAxis
from .store import ZarrStore, default_gridded_spec, default_series_spec, default_static_spec


class IngestError(ValueError):
    """Raised for malformed inputs or unsupported parameter combinations."""


class UnsupportedRatioError(IngestError):
    """Fine-to-coarse resolution ratio is not a positive integer."""


# ---------------------------------------------------------------------------
# temporal aggregation


def _nan_reduce(block, rule):
    """Reduce axis 0 with NaN handling; all-NaN columns reduce to NaN."""
    mask = np.isnan(block)
    count = (~mask).sum(axis=0)
    if rule == "mean":
        total = np.nansum(block, axis=0)
        out = np.divide(total, count, out=np.full(count.shape, np.nan), where=count > 0)
    elif rule == "sum":
        out = np.where(count > 0, np.nansum(block, axis=0), np.nan)
    elif rule == "min":
        out = np.where(count > 0, np.where(mask, np.inf, block).min(axis=0), np.nan)
    elif rule == "max":
        out = np.where(count > 0, np.where(mask, -np.inf, block).max(axis=0), np.nan)
    else:
        raise IngestError(f"unknown aggregation rule {rule!r}")
    return out


def aggregate_8day(daily, start_date, axis: TimeAxis, rule):
    """Composite a daily series (time on axis 0) into per-period values.

    `daily[0]` is valid on `start_date`; periods with no contributing days
    come out NaN. Output shape is (len(axis), *daily.shape[1:]).
    """
    daily = np.asarray(daily, dtype=np.float64)
    if daily.ndim == 0 or daily.shape[0] == 0:
        raise IngestError("empty daily series")
    axis_start = axis.entries[0].start_date
    axis_end = axis.entries[-1].end_date
    if start_date < axis_start or start_date + dt.timedelta(days=int(daily.shape[0])) > axis_end:
        raise IngestError("daily series extends outside the time axis")
    day0 = (start_date - axis_start).days
    out = np.full((len(axis),) + daily.shape[1:], np.nan)
    for step, period in enumerate(axis.entries):
        p0 = (period.start_date - axis_start).days
        lo = max(p0, day0)
        hi = min(p0 + period.length_days, day0 + daily.shape[0])
        if lo >= hi:
            continue
        out[step] = _nan_reduce(daily[lo - day0 : hi - day0], rule)
    return out


# ---------------------------------------------------------------------------
# spatial resampling


def _block_ratio(fine_shape, grid: GeoGrid):
    h, w = fine_shape
    if h % grid.n_lat or w % grid.n_lon:
        raise UnsupportedRatioError(f"fine raster {h}x{w} is not an integer multiple of {grid.shape}")
    k = h // grid.n_lat
    if w // grid.n_lon != k or k < 1:
        raise UnsupportedRatioError(f"anisotropic ratio for {h}x{w} onto {grid.shape}")
    return k


def regrid(fine, grid: GeoGrid, rule):
    """Block-aggregate a finer raster (2-D or leading-time 3-D) onto the grid."""
    fine = np.asarray(fine, dtype=np.float64)
    squeeze = fine.ndim == 2
    if squeeze:
        fine = fine[None]
    if fine.ndim != 3:
        raise IngestError("expected a 2-D raster or 3-D raster stack")
    k = _block_ratio(fine.shape[1:], grid)
    if rule == "none":
        if k != 1:
            raise UnsupportedRatioError("resample 'none' requires the raster to be at grid resolution")
        out = fine.copy()
    elif rule == "nearest":
        half = k // 2
        out = fine[:, half::k, half::k].copy()
    elif rule in ("mean", "sum"):
        t = fine.shape[0]
        blocks = fine.reshape(t, grid.n_lat, k, grid.n_lon, k)
        blocks = blocks.transpose(0, 1, 3, 2, 4).reshape(t, grid.n_lat, grid.n_lon, k * k)
        mask = np.isnan(blocks)
        count = (~mask).sum(axis=-1)
        total = np.nansum(blocks, axis=-1)
        if rule == "mean":
            out = np.divide(total, count, out=np.full(count.shape, np.nan), where=count > 0)
        else:
            out = np.where(count > 0, total, np.nan)
    else:
        raise IngestError(f"unknown resample rule {rule!r}")
    return out[0] if squeeze else out


# ---------------------------------------------------------------------------
# burned-event rasterization


@dataclass(frozen=True)
class BurnEvent:
    lat: float
    lon: float
    date: dt.date
    area: float


def rasterize_events(events, grid: GeoGrid, axis: TimeAxis):
    """Deposit event areas onto (time, lat, lon); returns (field, n_skipped).

    Out-of-range events (coordinates, dates, or non-positive areas) are
    skipped and counted, never fatal.
    """
    field = np.zeros((len(axis), grid.n_lat, grid.n_lon), dtype=np.float64)
    skipped = 0
    for ev in events:
        if not ev.area > 0:
            skipped += 1
            continue
        try:
            row, col = grid.latlon_to_index(ev.lat, ev.lon)
            step = axis.date_to_step(ev.date)
        except GridDomainError:
            skipped += 1
            continue
        field[step, row, col] += ev.area
    return field, skipped


# ---------------------------------------------------------------------------
# raw input readers/writers


def read_raster(sidecar_path):
    """Load a raster described by its JSON sidecar.

    Sidecar schema::

        {
          "name": "ndvi",                 # variable identifier
          "data": "ndvi.f32",             # raw <f4 C-order payload, relative path
          "shape": [365, 3600, 7200],     # [days, height, width] or [height, width]
          "resolution_deg": 0.05,
          "start_date": "2001-01-01"      # required for 3-D stacks
        }
    """
    sidecar_path = Path(sidecar_path)
    meta = json.loads(sidecar_path.read_text(encoding="utf-8"))
    shape = tuple(int(s) for s in meta["shape"])
    if len(shape) not in (2, 3):
        raise IngestError(f"sidecar shape {shape} must be 2-D or 3-D")
    data_path = sidecar_path.parent / meta["data"]
    raw = np.fromfile(data_path, dtype="<f4")
    if raw.size != int(np.prod(shape)):
        raise IngestError(f"{data_path} holds {raw.size} values, expected {np.prod(shape)}")
    values = raw.reshape(shape).astype(np.float64)
    start_date = dt.date.fromisoformat(meta["start_date"]) if "start_date" in meta else None
    if len(shape) == 3 and start_date is None:
        raise IngestError("3-D raster sidecar requires start_date")
    return values, float(meta["resolution_deg"]), start_date


def write_raster(sidecar_path, values, resolution_deg, start_date=None, name=None):
    """Write a raster + sidecar pair (the inverse of :func:`read_raster`)."""
    sidecar_path = Path(sidecar_path)
    values = np.asarray(values, dtype="<f4")
    data_name = sidecar_path.stem + ".f32"
    meta = {
        "name": name or sidecar_path.stem,
        "data": data_name,
        "shape": list(values.shape),
        "resolution_deg": resolution_deg,
    }
    if start_date is not None:
        meta["start_date"] = start_date.isoformat()
    (sidecar_path.parent / data_name).write_bytes(values.tobytes(order="C"))
    sidecar_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_events_csv(path):
    events = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            events.append(
                BurnEvent(
                    lat=float(row["lat"]),
                    lon=float(row["lon"]),
                    date=dt.date.fromisoformat(row["date"]),
                    area=float(row["area_ha"]),
                )
            )
    return events


def read_series_csv(path):
    """Sparse (date, value) series; returns sorted lists."""
    dates, values = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            dates.append(dt.date.fromisoformat(row["date"]))
            values.append(float(row["value"]))
    order = np.argsort(np.array([d.toordinal() for d in dates]))
    return [dates[i] for i in order], [values[i] for i in order]


def series_to_daily(dates, values, axis: TimeAxis):
    """Forward-fill a sparse series over the full axis span (NaN before first)."""
    start = axis.entries[0].start_date
    n_days = (axis.entries[-1].end_date - start).days
    daily = np.full(n_days, np.nan)
    for date, value in zip(dates, values):
        lo = (date - start).days
        if lo >= n_days:
            break
        daily[max(lo, 0) :] = value
    return daily


# ---------------------------------------------------------------------------
# cube build


def _nan_fraction(arr):
    return float(np.isnan(arr).mean()) if arr.size else 0.0


def _build_gridded(var, entry, manifest):
    fmt = entry.get("format", "raster")
    if fmt == "events":
        events = read_events_csv(entry["path"])
        field, skipped = rasterize_events(events, manifest.grid, manifest.axis)
        return field, skipped
    values, res, start_date = read_raster(entry.get("sidecar", entry.get("path")))
    if values.ndim != 3:
        raise IngestError(f"variable {var.name!r} expects a daily raster stack")
    periods = aggregate_8day(values, start_date, manifest.axis, var.temporal_agg)
    return regrid(periods, manifest.grid, var.resample), 0


def build_cube(manifest, inputs, store_root, ingest_report_path=None):
    """Write every manifest variable with an input entry; collect failures.

    `inputs` maps variable name to an entry dict: ``{"format": "raster",
    "sidecar": path}``, ``{"format": "events", "path": csv}`` or
    ``{"format": "series", "path": csv}``. Returns the build report dict.
    """
    store = ZarrStore.create(store_root, attrs=manifest.to_attrs())
    report = {"variables": {}, "skipped_events": 0}
    for var in manifest.variables:
        entry = inputs.get(var.name)
        if entry is None:
            report["variables"][var.name] = {"status": "failed", "error": "missing source"}
            continue
        try:
            attrs = {"units": var.units, "aggregation": var.temporal_agg, "source": var.source_tag}
            if var.spatial_kind == "scalar-series":
                dates, vals = read_series_csv(entry["path"])
                daily = series_to_daily(dates, vals, manifest.axis)
                series = aggregate_8day(daily, manifest.axis.entries[0].start_date, manifest.axis, var.temporal_agg)
                handle = store.create_array(default_series_spec(var.name, len(manifest.axis)), attrs)
                handle.write_region((0,), series.astype("<f4"))
                written = series
            elif var.spatial_kind == "static-map":
                values, res, _ = read_raster(entry.get("sidecar", entry.get("path")))
                if values.ndim != 2:
                    raise IngestError(f"static variable {var.name!r} expects a 2-D raster")
                coarse = regrid(values, manifest.grid, var.resample)
                handle = store.create_array(default_static_spec(var.name, manifest.grid), attrs)
                handle.write_region((0, 0), coarse.astype("<f4"))
                written = coarse
            else:
                field, skipped = _build_gridded(var, entry, manifest)
                report["skipped_events"] += skipped
                handle = store.create_array(
                    default_gridded_spec(var.name, len(manifest.axis), manifest.grid), attrs
                )
                for t in range(field.shape[0]):
                    handle.write_region((t, 0, 0), field[t : t + 1].astype("<f4"))
                written = field
            covered = (
                int(np.sum(~np.isnan(written).reshape(written.shape[0], -1).all(axis=1)))
                if var.spatial_kind != "static-map"
                else 1
            )
            report["variables"][var.name] = {
                "status": "ok",
                "periods": covered,
                "nan_fraction": _nan_fraction(np.asarray(written, dtype=np.float64)),
            }
        except (IngestError, OSError, KeyError, ValueError) as exc:
            report["variables"][var.name] = {"status": "failed", "error": str(exc)}
    if ingest_report_path is not None:
        Path(ingest_report_path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report
