"""Spatial grid, 8-day time axis, and patch tiling geometry.

Everything downstream (storage, ingestion, dataset extraction, evaluation)
indexes space and time through this module. The global grid is cell-centered
with row 0 at the northern edge; the time axis packs every calendar year into
46 periods anchored at January 1, so period-of-year arithmetic is a plain
modulo.
"""

from __future__ import annotations

import datetime as dt
import math
from bisect import bisect_right
from dataclasses import dataclass, field


class GridDomainError(ValueError):
    """Coordinate or date outside the grid/axis domain."""


@dataclass(frozen=True)
class GeoGrid:
    """Cell-centered lat/lon grid; rows increase southward, columns eastward."""

    n_lat: int = 720
    n_lon: int = 1440
    resolution_deg: float = 0.25
    registration: str = "cell-center"
    row0: str = "north"

    def __post_init__(self):
        if self.registration != "cell-center" or self.row0 != "north":
            raise ValueError("only cell-center registration with northern row 0 is supported")
        if abs(self.n_lat * self.resolution_deg - 180.0) > 1e-9:
            raise ValueError("n_lat * resolution_deg must equal 180")
        if abs(self.n_lon * self.resolution_deg - 360.0) > 1e-9:
            raise ValueError("n_lon * resolution_deg must equal 360")

    @classmethod
    def small(cls, n_lat):
        """Reduced grid with the same global extent (n_lon = 2 * n_lat)."""
        return cls(n_lat=n_lat, n_lon=2 * n_lat, resolution_deg=180.0 / n_lat)

    @property
    def shape(self):
        return (self.n_lat, self.n_lon)

    def index_to_latlon(self, row, col):
        """Center coordinates of cell (row, col)."""
        if not (0 <= row < self.n_lat and 0 <= col < self.n_lon):
            raise GridDomainError(f"cell ({row}, {col}) outside {self.n_lat}x{self.n_lon} grid")
        half = self.resolution_deg / 2.0
        lat = 90.0 - half - row * self.resolution_deg
        lon = -180.0 + half + col * self.resolution_deg
        return lat, lon

    def latlon_to_index(self, lat, lon):
        """Cell whose center is nearest to (lat, lon); exact boundary ties go
        north/west. Longitude convention is [-180, 180)."""
        if not (-90.0 <= lat <= 90.0):
            raise GridDomainError(f"latitude {lat} outside [-90, 90]")
        if not (-180.0 <= lon < 180.0):
            raise GridDomainError(f"longitude {lon} outside [-180, 180)")
        row = math.ceil((90.0 - lat) / self.resolution_deg - 1.0)
        col = math.ceil((lon + 180.0) / self.resolution_deg - 1.0)
        row = min(max(row, 0), self.n_lat - 1)
        col = min(max(col, 0), self.n_lon - 1)
        return row, col


PERIODS_PER_YEAR = 46


@dataclass(frozen=True)
class TimePeriod:
    year: int
    period_index: int
    start_date: dt.date
    length_days: int

    @property
    def end_date(self):
        """First day after the period."""
        return self.start_date + dt.timedelta(days=self.length_days)


def _year_periods(year):
    jan1 = dt.date(year, 1, 1)
    days_in_year = (dt.date(year + 1, 1, 1) - jan1).days
    periods = []
    for p in range(PERIODS_PER_YEAR):
        start = jan1 + dt.timedelta(days=8 * p)
        length = 8 if p < PERIODS_PER_YEAR - 1 else days_in_year - 8 * p
        periods.append(TimePeriod(year, p, start, length))
    return periods


@dataclass(frozen=True)
class TimeAxis:
    """46 periods per year: 45 of 8 days plus a short final period (5 or 6 days)."""

    start_year: int
    end_year: int
    entries: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.end_year < self.start_year:
            raise ValueError("end_year must be >= start_year")
        entries = []
        for year in range(self.start_year, self.end_year + 1):
            entries.extend(_year_periods(year))
        object.__setattr__(self, "entries", tuple(entries))

    def __len__(self):
        return len(self.entries)

    @property
    def periods_per_year(self):
        return PERIODS_PER_YEAR

    def date_to_step(self, date):
        """Index of the period containing `date`."""
        starts = [e.start_date for e in self.entries]
        if date < starts[0] or date >= self.entries[-1].end_date:
            raise GridDomainError(f"date {date} outside axis {self.start_year}..{self.end_year}")
        return bisect_right(starts, date) - 1

    def step_to_period(self, step):
        return self.entries[step]

    def period_of_year(self, step):
        return step % PERIODS_PER_YEAR

    def year_of_step(self, step):
        return self.entries[step].year


@dataclass(frozen=True)
class PatchGridSpec:
    """Aligned, non-overlapping tiling; the canvas is padded up to tile multiples."""

    patch_px: int = 128
    pad_value: float = float("nan")
    tiling: str = "aligned-padded"

    def __post_init__(self):
        if self.tiling != "aligned-padded":
            raise ValueError("only aligned-padded tiling is supported")
        if self.patch_px <= 0:
            raise ValueError("patch_px must be positive")

    def padded_shape(self, grid):
        p = self.patch_px
        return (-(-grid.n_lat // p) * p, -(-grid.n_lon // p) * p)

    def tile_origins(self, grid):
        """Top-left (row, col) of every tile, row-major order."""
        pad_rows, pad_cols = self.padded_shape(grid)
        return [
            (r, c)
            for r in range(0, pad_rows, self.patch_px)
            for c in range(0, pad_cols, self.patch_px)
        ]


def tile_patches(grid, spec=None):
    if spec is None:
        spec = PatchGridSpec()
    return spec.tile_origins(grid)
