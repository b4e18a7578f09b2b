import datetime as dt
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from firecast.grid import GeoGrid, TimeAxis
from firecast.ingest import (
    BurnEvent,
    IngestError,
    UnsupportedRatioError,
    aggregate_8day,
    build_cube,
    rasterize_events,
    read_raster,
    regrid,
    series_to_daily,
    write_raster,
)
from firecast.store import ZarrStore
from firecast.variables import CubeManifest, default_registry


def brute_aggregate(daily, start_date, axis, rule):
    """Day-by-day reference: apply the rule per period over non-NaN values."""
    out = np.full(len(axis), np.nan)
    for step, period in enumerate(axis.entries):
        vals = []
        for d in range(daily.shape[0]):
            day = start_date + dt.timedelta(days=d)
            if period.start_date <= day < period.end_date:
                v = daily[d]
                if not np.isnan(v):
                    vals.append(v)
        if vals:
            if rule == "mean":
                out[step] = np.mean(vals)
            elif rule == "sum":
                out[step] = np.sum(vals)
            elif rule == "min":
                out[step] = np.min(vals)
            elif rule == "max":
                out[step] = np.max(vals)
    return out


def test_aggregate_constant_mean():
    axis = TimeAxis(2001, 2001)
    daily = np.full(365, 5.0)
    out = aggregate_8day(daily, dt.date(2001, 1, 1), axis, "mean")
    assert np.allclose(out, 5.0)


def test_aggregate_first_period_sum():
    axis = TimeAxis(2001, 2001)
    daily = np.arange(1.0, 366.0)
    out = aggregate_8day(daily, dt.date(2001, 1, 1), axis, "sum")
    assert out[0] == 36.0  # 1+2+...+8


def test_aggregate_min_ignores_nan():
    axis = TimeAxis(2001, 2001)
    daily = np.full(365, np.nan)
    daily[:8] = [4, 2, np.nan, 7, 9, 8, 6, 5]
    out = aggregate_8day(daily, dt.date(2001, 1, 1), axis, "min")
    assert out[0] == 2.0
    assert np.isnan(out[1])


@pytest.mark.parametrize("rule", ["mean", "sum", "min", "max"])
def test_aggregate_matches_brute_force(rule):
    axis = TimeAxis(2003, 2003)
    rng = np.random.default_rng(13)
    for _ in range(30):
        daily = rng.standard_normal(365)
        daily[rng.random(365) < 0.3] = np.nan
        ours = aggregate_8day(daily, dt.date(2003, 1, 1), axis, rule)
        ref = brute_aggregate(daily, dt.date(2003, 1, 1), axis, rule)
        both_nan = np.isnan(ours) & np.isnan(ref)
        if rule in ("min", "max"):
            assert np.array_equal(ours[~both_nan], ref[~both_nan])  # bitwise
        else:
            assert np.allclose(ours[~both_nan], ref[~both_nan], rtol=1e-12, atol=0)
        assert np.array_equal(np.isnan(ours), np.isnan(ref))


def test_aggregate_partial_series_and_empty():
    axis = TimeAxis(2001, 2001)
    out = aggregate_8day(np.ones(8), dt.date(2001, 1, 9), axis, "mean")
    assert np.isnan(out[0]) and out[1] == 1.0 and np.isnan(out[2])
    with pytest.raises(IngestError):
        aggregate_8day(np.array([]), dt.date(2001, 1, 1), axis, "mean")


def test_regrid_constant_mean_and_shapes():
    grid = GeoGrid.small(4)  # 4 x 8
    fine = np.full((20, 40), 3.25)
    out = regrid(fine, grid, "mean")
    assert out.shape == (4, 8)
    assert np.allclose(out, 3.25)


def test_regrid_block_mean_value():
    grid = GeoGrid.small(1)  # 1 x 2 cells
    fine = np.concatenate([np.arange(1.0, 26.0).reshape(5, 5), np.zeros((5, 5))], axis=1)
    out = regrid(fine, grid, "mean")
    assert out[0, 0] == 13.0


def test_regrid_sum_all_nan_propagates():
    grid = GeoGrid.small(1)
    fine = np.full((5, 10), np.nan)
    fine[:, 5:] = 1.0
    out = regrid(fine, grid, "sum")
    assert np.isnan(out[0, 0]) and out[0, 1] == 25.0


def test_regrid_nearest_takes_block_center():
    grid = GeoGrid.small(2)  # 2 x 4, ratio 3 for 6 x 12 input
    fine = np.arange(72.0).reshape(6, 12)
    out = regrid(fine, grid, "nearest")
    assert out[0, 0] == fine[1, 1]
    assert out[1, 3] == fine[4, 10]


def test_regrid_scaling_commutes():
    grid = GeoGrid.small(3)
    rng = np.random.default_rng(14)
    fine = rng.random((12, 24))
    assert np.allclose(regrid(4.0 * fine, grid, "mean"), 4.0 * regrid(fine, grid, "mean"), rtol=1e-12)


def test_regrid_matches_brute_force_blocks():
    grid = GeoGrid.small(2)
    rng = np.random.default_rng(15)
    for _ in range(50):
        k = int(rng.integers(1, 6))
        fine = rng.random((2 * k, 4 * k))
        fine[rng.random(fine.shape) < 0.25] = np.nan
        for rule in ("mean", "sum"):
            ours = regrid(fine, grid, rule)
            for r in range(2):
                for c in range(4):
                    block = fine[r * k : (r + 1) * k, c * k : (c + 1) * k].ravel()
                    vals = block[~np.isnan(block)]
                    if vals.size == 0:
                        assert np.isnan(ours[r, c])
                    elif rule == "mean":
                        assert ours[r, c] == pytest.approx(vals.mean(), rel=1e-12)
                    else:
                        assert ours[r, c] == pytest.approx(vals.sum(), rel=1e-12)


def test_regrid_non_integer_ratio_rejected():
    grid = GeoGrid.small(4)
    with pytest.raises(UnsupportedRatioError):
        regrid(np.zeros((10, 20)), grid, "mean")  # 10/4 not an integer
    with pytest.raises(UnsupportedRatioError):
        regrid(np.zeros((8, 8)), grid, "mean")  # anisotropic


def test_rasterize_empty_and_additive():
    grid = GeoGrid.small(8)
    axis = TimeAxis(2001, 2001)
    field, skipped = rasterize_events([], grid, axis)
    assert field.sum() == 0 and skipped == 0
    events = [
        BurnEvent(10.0, 20.0, dt.date(2001, 5, 1), 10.0),
        BurnEvent(10.0, 20.0, dt.date(2001, 5, 1), 20.0),
    ]
    field, skipped = rasterize_events(events, grid, axis)
    step = axis.date_to_step(dt.date(2001, 5, 1))
    r, c = grid.latlon_to_index(10.0, 20.0)
    assert field[step, r, c] == 30.0
    assert field.sum() == 30.0


def test_rasterize_skips_out_of_range_with_count():
    grid = GeoGrid.small(8)
    axis = TimeAxis(2001, 2001)
    events = [
        BurnEvent(10.0, 20.0, dt.date(2002, 5, 1), 10.0),  # date outside axis
        BurnEvent(10.0, 20.0, dt.date(2001, 5, 1), -3.0),  # bad area
        BurnEvent(10.0, 20.0, dt.date(2001, 5, 1), 7.0),
    ]
    field, skipped = rasterize_events(events, grid, axis)
    assert skipped == 2
    assert field.sum() == 7.0


def test_rasterize_thousand_events_matches_independent_deposition():
    grid = GeoGrid.small(16)
    axis = TimeAxis(2001, 2001)
    rng = np.random.default_rng(16)
    events = [
        BurnEvent(
            float(rng.uniform(-89.9, 89.9)),
            float(rng.uniform(-180, 179.9)),
            dt.date(2001, 1, 1) + dt.timedelta(days=int(rng.integers(0, 365))),
            float(rng.uniform(0.5, 100.0)),
        )
        for _ in range(1000)
    ]
    field, skipped = rasterize_events(events, grid, axis)
    assert skipped == 0
    reference = np.zeros_like(field)
    for ev in events:
        r, c = grid.latlon_to_index(ev.lat, ev.lon)
        reference[axis.date_to_step(ev.date), r, c] += ev.area
    assert np.array_equal(field, reference)
    # area conservation
    assert field.sum() == pytest.approx(sum(e.area for e in events), rel=1e-9)


def test_raster_sidecar_roundtrip(tmp_path):
    values = np.arange(24.0, dtype="<f4").reshape(2, 3, 4)
    write_raster(tmp_path / "v.json", values, 0.5, dt.date(2001, 1, 1))
    back, res, start = read_raster(tmp_path / "v.json")
    assert np.array_equal(back, values)
    assert res == 0.5 and start == dt.date(2001, 1, 1)


def test_series_forward_fill():
    axis = TimeAxis(2001, 2001)
    daily = series_to_daily([dt.date(2001, 1, 5), dt.date(2001, 2, 1)], [1.0, 2.0], axis)
    assert np.isnan(daily[0]) and daily[4] == 1.0 and daily[31] == 2.0 and daily[-1] == 2.0


def _make_inputs(tmp_path, grid, axis):
    rng = np.random.default_rng(17)
    n_days = (axis.entries[-1].end_date - axis.entries[0].start_date).days
    fine = rng.random((n_days, grid.n_lat * 2, grid.n_lon * 2)).astype("<f4")
    write_raster(tmp_path / "ndvi.json", fine, grid.resolution_deg / 2, axis.entries[0].start_date)
    with open(tmp_path / "events.csv", "w") as fh:
        fh.write("lat,lon,date,area_ha\n")
        fh.write("10.0,20.0,2001-03-05,12.5\n")
        fh.write("-5.0,-60.0,2001-08-20,3.0\n")
    with open(tmp_path / "nao.csv", "w") as fh:
        fh.write("date,value\n2001-01-01,0.5\n2001-07-01,-0.25\n")
    return {
        "ndvi": {"format": "raster", "sidecar": str(tmp_path / "ndvi.json")},
        "burned_areas_gwis": {"format": "events", "path": str(tmp_path / "events.csv")},
        "nao_index": {"format": "series", "path": str(tmp_path / "nao.csv")},
    }


def test_build_cube_end_to_end(tmp_path):
    grid = GeoGrid.small(8)
    axis = TimeAxis(2001, 2001)
    registry = default_registry()
    manifest = CubeManifest(
        variables=(registry["ndvi"], registry["burned_areas_gwis"], registry["nao_index"]),
        axis=axis,
        grid=grid,
    )
    inputs = _make_inputs(tmp_path, grid, axis)
    report = build_cube(manifest, inputs, tmp_path / "cube")
    assert all(v["status"] == "ok" for v in report["variables"].values())
    store = ZarrStore.open(tmp_path / "cube")
    assert store.array_names() == ["burned_areas_gwis", "nao_index", "ndvi"]
    ndvi = store.open_array("ndvi")
    assert ndvi.spec.shape == (46, 8, 16)
    # compare one cell against the in-memory pipeline
    values, res, start = read_raster(inputs["ndvi"]["sidecar"])
    from firecast.ingest import aggregate_8day as agg

    expected = regrid(agg(values, start, axis, "mean"), grid, "mean").astype("<f4")
    assert np.array_equal(ndvi.read_full(), expected)
    burned = store.open_array("burned_areas_gwis").read_full()
    assert burned.sum() == np.float32(12.5) + np.float32(3.0)


def test_build_cube_missing_source_is_per_variable_failure(tmp_path):
    grid = GeoGrid.small(8)
    axis = TimeAxis(2001, 2001)
    registry = default_registry()
    manifest = CubeManifest(
        variables=(registry["ndvi"], registry["lst_day"]),
        axis=axis,
        grid=grid,
    )
    inputs = _make_inputs(tmp_path, grid, axis)
    report = build_cube(manifest, inputs, tmp_path / "cube")
    assert report["variables"]["ndvi"]["status"] == "ok"
    assert report["variables"]["lst_day"] == {"status": "failed", "error": "missing source"}


def _store_digest(root):
    digest = hashlib.sha256()
    for path in sorted(Path(root).rglob("*")):
        if path.is_file():
            digest.update(path.name.encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


def test_build_cube_rerun_is_byte_identical(tmp_path):
    grid = GeoGrid.small(8)
    axis = TimeAxis(2001, 2001)
    registry = default_registry()
    manifest = CubeManifest(variables=(registry["ndvi"],), axis=axis, grid=grid)
    inputs = _make_inputs(tmp_path, grid, axis)
    build_cube(manifest, inputs, tmp_path / "cube_a")
    build_cube(manifest, inputs, tmp_path / "cube_b")
    assert _store_digest(tmp_path / "cube_a") == _store_digest(tmp_path / "cube_b")


def test_static_variable_stored_once(tmp_path):
    grid = GeoGrid.small(8)
    axis = TimeAxis(2001, 2001)
    registry = default_registry()
    manifest = CubeManifest(variables=(registry["population_density"],), axis=axis, grid=grid)
    static = np.arange(grid.n_lat * grid.n_lon, dtype="<f4").reshape(grid.shape)
    write_raster(tmp_path / "pop.json", static, grid.resolution_deg)
    report = build_cube(
        manifest, {"population_density": {"format": "raster", "sidecar": str(tmp_path / "pop.json")}}, tmp_path / "cube"
    )
    assert report["variables"]["population_density"]["status"] == "ok"
    arr = ZarrStore.open(tmp_path / "cube").open_array("population_density")
    assert arr.spec.shape == grid.shape  # no time dimension
    assert np.array_equal(arr.read_full(), static)


def test_registry_covers_all_source_blocks():
    registry = default_registry()
    sources = {v.source_tag for v in registry.values()}
    assert {"ERA5", "CEMS", "CAMS", "FCCI", "MODIS", "SEDAC", "GFED", "GWIS", "NOAA"} <= sources
    statics = [v for v in registry.values() if v.temporal_agg == "static"]
    assert [v.name for v in statics] == ["population_density"]
    noaa = [v for v in registry.values() if v.source_tag == "NOAA"]
    assert all(v.spatial_kind == "scalar-series" and v.resample == "none" for v in noaa)
