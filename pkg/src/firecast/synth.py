"""Deterministic miniature Earth-like cube generator.

Drivers follow per-latitude seasonal cycles plus AR(1) anomalies whose
innovations come from counter-based streams, so the same config produces the
same cube bytes regardless of generation order or worker count. Burn
probability is a logistic link over a linear driver combination, an extra
seasonal term, a fixed per-cell geographic offset, and an optional
neighborhood feedback on the previous period's burns. A per-pixel learner can
recover the linear part; only a spatial model can exploit the neighborhood
part, because anomalies are white in space.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .grid import GeoGrid, TimeAxis, PERIODS_PER_YEAR
from .rng import counter_normalish, counter_uniform
from .store import ZarrStore, default_gridded_spec, default_static_spec
from .variables import CubeManifest, DEFAULT_INPUT_CHANNELS, VariableSpec, default_registry

# stream-id tags keep the counter domains disjoint
_TAG_DRIVER = 1
_TAG_GEO = 2
_TAG_BURN = 3
_TAG_AREA = 4

SYNTH_START_YEAR = 2002
BURNED_VARIABLE = "burned_areas_gwis"
LOGIT_VARIABLE = "burn_logit"
LAND_VARIABLE = "land_mask"

# true logit direction over channels; zero-weight channels are distractors
# for the weight-recovery checks
_DEFAULT_WEIGHTS = (1.6, -1.1, 0.8, 0.0, 1.2, -0.7, 0.5, 0.0)


@dataclass(frozen=True)
class WorldConfig:
    """Strengths are in logit standard deviations: the burn logit mixes a
    seasonal component (visible in the drivers), an AR(1) anomaly component
    (visible but decaying with lead), and a per-cell geographic offset that no
    per-pixel input carries."""

    seed: int = 0
    grid: GeoGrid = field(default_factory=lambda: GeoGrid.small(64))
    years: int = 8
    n_channels: int = 8
    target_positive_rate: float = 0.016
    predictability_decay: float = 0.8
    neighborhood_weight: float = 0.0
    driver_weights: tuple = _DEFAULT_WEIGHTS
    seasonal_strength: float = 3.0
    anomaly_strength: float = 2.8
    geo_strength: float = 1.8

    def __post_init__(self):
        if not 0.0 < self.predictability_decay < 1.0:
            raise ValueError("predictability_decay must be in (0, 1)")
        if self.neighborhood_weight < 0:
            raise ValueError("neighborhood_weight must be >= 0")
        if len(self.driver_weights) != self.n_channels:
            raise ValueError("driver_weights length must equal n_channels")

    @property
    def channel_names(self):
        if self.n_channels == len(DEFAULT_INPUT_CHANNELS):
            return DEFAULT_INPUT_CHANNELS
        return tuple(f"driver_{i:02d}" for i in range(self.n_channels))

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["grid"] = {"n_lat": self.grid.n_lat, "n_lon": self.grid.n_lon, "resolution_deg": self.grid.resolution_deg}
        d["driver_weights"] = list(self.driver_weights)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "grid" in d and isinstance(d["grid"], dict):
            d["grid"] = GeoGrid(**d["grid"])
        if "driver_weights" in d:
            d["driver_weights"] = tuple(d["driver_weights"])
        return cls(**d)


def land_mask(grid: GeoGrid):
    """Fixed latitude-banded pseudo-continents; no dependence on the seed."""
    lat = np.array([grid.index_to_latlon(r, 0)[0] for r in range(grid.n_lat)])
    lon = np.array([grid.index_to_latlon(0, c)[1] for c in range(grid.n_lon)])
    lat2d = lat[:, None]
    lon2d = lon[None, :]
    pattern = (
        np.sin(np.radians(lon2d) * 2.0 + 1.0) * np.cos(np.radians(lat2d) * 1.5)
        + 0.3 * np.sin(np.radians(lon2d) * 5.0)
    )
    return (pattern > -0.15) & (np.abs(lat2d) <= 66.0)


def _latitude_envelope(grid):
    lat = np.array([grid.index_to_latlon(r, 0)[0] for r in range(grid.n_lat)])
    return 0.3 + 0.7 * np.abs(np.sin(np.radians(lat)))[:, None]


def _seasonal_field(grid, axis, amp, phase):
    """(T, n_lat, 1) seasonal cycle; southern hemisphere shifted half a year."""
    lat = np.array([grid.index_to_latlon(r, 0)[0] for r in range(grid.n_lat)])
    hemi_shift = np.where(lat < 0, 0.5, 0.0)[:, None]
    env = _latitude_envelope(grid)
    p = np.array([axis.period_of_year(t) for t in range(len(axis))], dtype=np.float64)
    cyc = p[:, None, None] / PERIODS_PER_YEAR - phase - hemi_shift[None, :, :]
    return amp * np.cos(2.0 * np.pi * cyc) * env[None, :, :]


def _driver_anomalies(config, channel, n_steps):
    """Stationary AR(1) anomaly stack for one channel, unit marginal variance."""
    grid = config.grid
    rows = np.arange(grid.n_lat, dtype=np.int64)[:, None]
    cols = np.arange(grid.n_lon, dtype=np.int64)[None, :]
    d = config.predictability_decay
    innov_scale = np.sqrt(1.0 - d * d)
    out = np.empty((n_steps, grid.n_lat, grid.n_lon))
    state = counter_normalish(config.seed, _TAG_DRIVER, channel, 0, rows, cols)
    out[0] = state
    for t in range(1, n_steps):
        innov = counter_normalish(config.seed, _TAG_DRIVER, channel, t, rows, cols)
        state = d * state + innov_scale * innov
        out[t] = state
    return out


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _calibrate_bias(base_logit, land, target_rate):
    """Bisect the intercept so the mean land burn probability hits the target."""
    values = base_logit[:, land]
    lo, hi = -30.0, 30.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _sigmoid(values + mid).mean() < target_rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _box_mean(mask):
    """Mean of a binary field over each cell's 3x3 neighborhood (edge-clipped)."""
    padded = np.pad(mask.astype(np.float64), 1)
    counts = np.pad(np.ones_like(mask, dtype=np.float64), 1)
    s = sum(
        padded[1 + dr : padded.shape[0] - 1 + dr, 1 + dc : padded.shape[1] - 1 + dc]
        for dr in (-1, 0, 1)
        for dc in (-1, 0, 1)
    )
    n = sum(
        counts[1 + dr : counts.shape[0] - 1 + dr, 1 + dc : counts.shape[1] - 1 + dc]
        for dr in (-1, 0, 1)
        for dc in (-1, 0, 1)
    )
    return s / n


def _world_manifest(config, axis):
    registry = default_registry()
    variables = []
    for name in config.channel_names:
        if name in registry:
            variables.append(registry[name])
        else:
            variables.append(VariableSpec(name, "unitless", "mean", source_tag="synthetic"))
    variables.append(registry[BURNED_VARIABLE])
    variables.append(VariableSpec(LOGIT_VARIABLE, "unitless", "mean", source_tag="synthetic"))
    variables.append(VariableSpec(LAND_VARIABLE, "unitless", "static", "static-map", "none", "synthetic"))
    return CubeManifest(
        variables=tuple(variables),
        axis=axis,
        grid=config.grid,
        attributes={"generator": "synthetic", "config": config.to_dict()},
    )


def generate_world(config: WorldConfig, store_root):
    """Write the synthetic cube; returns a small generation report."""
    grid = config.grid
    axis = TimeAxis(SYNTH_START_YEAR, SYNTH_START_YEAR + config.years - 1)
    n_steps = len(axis)
    land = land_mask(grid)
    ocean = ~land

    store = ZarrStore.create(store_root, attrs=_world_manifest(config, axis).to_attrs())

    def write_gridded(name, stack, mask_ocean=True):
        handle = store.create_array(default_gridded_spec(name, n_steps, grid))
        block = stack.astype("<f4")
        if mask_ocean:
            block[:, ocean] = np.nan
        handle.write_region((0, 0, 0), block)

    season_mix = np.zeros((n_steps, grid.n_lat, 1))
    anomaly_mix = np.zeros((n_steps, grid.n_lat, grid.n_lon))
    for k, name in enumerate(config.channel_names):
        amp = 1.0 + 0.4 * np.cos(2.0 * np.pi * k / config.n_channels)
        season = _seasonal_field(grid, axis, amp, phase=k / config.n_channels)
        anomalies = _driver_anomalies(config, k, n_steps)
        season_mix += config.driver_weights[k] * season
        anomaly_mix += config.driver_weights[k] * anomalies
        write_gridded(name, season + anomalies)

    rows = np.arange(grid.n_lat, dtype=np.int64)[:, None]
    cols = np.arange(grid.n_lon, dtype=np.int64)[None, :]
    geo = counter_normalish(config.seed, _TAG_GEO, rows, cols)
    # normalize each component to unit variance over (time, land) so the
    # configured strengths are in comparable logit units; all three share the
    # same channel direction, so a linear reader misfits only their ratio
    season_land = np.broadcast_to(season_mix, anomaly_mix.shape)[:, land]
    season_scale = float(season_land.std()) or 1.0
    anomaly_scale = float(np.linalg.norm(config.driver_weights)) or 1.0
    base_logit = (
        config.seasonal_strength * (season_mix / season_scale)
        + config.anomaly_strength * (anomaly_mix / anomaly_scale)
        + config.geo_strength * geo[None, :, :]
    )
    bias = _calibrate_bias(base_logit, land, config.target_positive_rate)

    burned = np.zeros((n_steps, grid.n_lat, grid.n_lon))
    logit = np.empty_like(burned)
    prev_mask = np.zeros(grid.shape, dtype=bool)
    for t in range(n_steps):
        step_logit = bias + base_logit[t]
        if config.neighborhood_weight > 0:
            step_logit = step_logit + config.neighborhood_weight * _box_mean(prev_mask)
        logit[t] = step_logit
        u = counter_uniform(config.seed, _TAG_BURN, t, rows, cols)
        mask = (u < _sigmoid(step_logit)) & land
        area = 1.0 + 999.0 * counter_uniform(config.seed, _TAG_AREA, t, rows, cols)
        burned[t][mask] = area[mask]
        prev_mask = mask

    write_gridded(BURNED_VARIABLE, burned)
    write_gridded(LOGIT_VARIABLE, logit, mask_ocean=False)
    static = store.create_array(default_static_spec(LAND_VARIABLE, grid))
    static.write_region((0, 0), land.astype("<f4"))

    positive_rate = float((burned[:, land] > 0).mean())
    report = {
        "store": str(store.root),
        "steps": n_steps,
        "land_fraction": float(land.mean()),
        "positive_rate": positive_rate,
        "intercept": bias,
    }
    return report


def save_config(config, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return WorldConfig.from_dict(json.load(fh))
