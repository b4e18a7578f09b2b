import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from firecast.climatology import ClimatologyBaseline, squash_scores
from firecast.grid import GeoGrid, TimeAxis
from firecast.metrics import average_precision, roc_auc
from firecast.store import ZarrStore
from firecast.synth import WorldConfig, generate_world


def _toy_axis_burned(values_by_year):
    """Build a (years*46, 1, 1) stack from per-year per-period scalars."""
    years = len(values_by_year)
    stack = np.zeros((years * 46, 1, 1))
    for y, per_period in enumerate(values_by_year):
        for p, v in enumerate(per_period):
            stack[y * 46 + p, 0, 0] = v
    return stack


def test_mean_of_constant_years():
    axis = TimeAxis(2001, 2003)
    per_year = np.zeros(46)
    per_year[3] = 10.0
    burned = _toy_axis_burned([per_year, per_year, per_year])
    table = ClimatologyBaseline().fit(burned, axis, [2001, 2002, 2003]).table_
    assert table[3, 0, 0] == 10.0
    assert table[4, 0, 0] == 0.0


def test_mean_over_half_burning_years():
    axis = TimeAxis(2001, 2004)
    hot = np.zeros(46)
    hot[7] = 10.0
    cold = np.zeros(46)
    burned = _toy_axis_burned([hot, cold, hot, cold])
    table = ClimatologyBaseline().fit(burned, axis, range(2001, 2005)).table_
    assert table[7, 0, 0] == 5.0


def test_never_observed_cell_is_nan():
    axis = TimeAxis(2001, 2002)
    burned = np.full((92, 2, 2), np.nan)
    burned[:, 0, 0] = 1.0
    table = ClimatologyBaseline().fit(burned, axis, [2001, 2002]).table_
    assert np.isnan(table[:, 1, 1]).all()
    assert (table[:, 0, 0] == 1.0).all()


def test_fit_year_validation():
    axis = TimeAxis(2001, 2002)
    burned = np.zeros((92, 1, 1))
    with pytest.raises(ValueError):
        ClimatologyBaseline().fit(burned, axis, [])
    with pytest.raises(ValueError):
        ClimatologyBaseline().fit(burned, axis, [1999])


def test_predict_depends_only_on_period_of_year():
    axis = TimeAxis(2001, 2002)
    rng = np.random.default_rng(31)
    burned = rng.random((92, 4, 4))
    baseline = ClimatologyBaseline().fit(burned, axis, [2001, 2002])
    a = baseline.predict_patch(3, (0, 0), 4)
    b = baseline.predict_patch(3 + 46, (0, 0), 4)
    assert np.array_equal(a, b)
    assert not hasattr(ClimatologyBaseline(), "table_")
    with pytest.raises(NotFittedError):
        ClimatologyBaseline().predict_patch(0, (0, 0), 4)


def test_scores_squashed_into_unit_interval():
    scores = squash_scores(np.array([0.0, 1.0, 1e6]))
    assert scores[0] == 0.0 and 0.49 < scores[1] < 0.51 and scores[2] < 1.0
    # squashing preserves order, so ranking metrics are unchanged
    rng = np.random.default_rng(32)
    raw = rng.exponential(100.0, size=400)
    labels = (rng.random(400) < 0.2).astype(int)
    labels[:2] = [0, 1]
    assert average_precision(raw, labels) == pytest.approx(
        average_precision(squash_scores(raw), labels), abs=1e-12
    )
    assert roc_auc(raw, labels) == pytest.approx(roc_auc(squash_scores(raw), labels), abs=1e-12)
    assert average_precision(3.7 * raw, labels) == pytest.approx(average_precision(raw, labels), abs=1e-12)


def test_store_roundtrip(tmp_path):
    axis = TimeAxis(2001, 2002)
    rng = np.random.default_rng(33)
    burned = rng.random((92, 4, 4))
    burned[:, 0, 1] = np.nan
    baseline = ClimatologyBaseline().fit(burned, axis, [2001, 2002])
    baseline.save_to_store(tmp_path / "clim")
    back = ClimatologyBaseline.load_from_store(tmp_path / "clim")
    assert back.fit_years_ == (2001, 2002)
    assert np.allclose(back.table_, baseline.table_.astype(np.float32), equal_nan=True)
    store = ZarrStore.open(tmp_path / "clim")
    assert store.open_array("climatology").spec.shape == (46, 4, 4)


def test_leakage_guard_fit_years_exclude_test(tmp_path):
    """Fitting through the test year changes scores; the fitted year set is
    recorded so pipelines can assert the window they used."""
    generate_world(WorldConfig(seed=12, grid=GeoGrid.small(32), years=4), tmp_path / "cube")
    store = ZarrStore.open(tmp_path / "cube")
    train_only = ClimatologyBaseline.fit_from_store(store, "burned_areas_gwis", [2002, 2003])
    with_test = ClimatologyBaseline.fit_from_store(store, "burned_areas_gwis", [2002, 2003, 2005])
    assert 2005 not in train_only.fit_years_
    assert not np.allclose(train_only.table_, with_test.table_, equal_nan=True)


def test_baseline_beats_random_on_synthetic_world(tmp_path):
    generate_world(WorldConfig(seed=13, grid=GeoGrid.small(32), years=6), tmp_path / "cube")
    store = ZarrStore.open(tmp_path / "cube")
    land = store.open_array("land_mask").read_full().astype(bool)
    burned = store.open_array("burned_areas_gwis").read_full()
    baseline = ClimatologyBaseline.fit_from_store(
        store, "burned_areas_gwis", [2002, 2003, 2004, 2005]
    )
    t0 = 46 * 5
    labels = (burned[t0 : t0 + 46][:, land] > 0).astype(int).ravel()
    scores = np.concatenate(
        [squash_scores(np.nan_to_num(baseline.predict_field(t0 + p)))[land][None] for p in range(46)]
    ).ravel()
    prevalence = labels.mean()
    assert average_precision(scores, labels) > 1.5 * prevalence
