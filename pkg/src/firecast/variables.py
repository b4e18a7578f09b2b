"""Variable registry and cube manifest.

Each registry row describes one cube variable: units, the 8-day temporal
aggregation rule, spatial kind, and the spatial resampling rule applied when
the raw input is finer than the target grid. The default registry covers the
full shipped variable set: reanalysis meteorology, fire-weather indices,
wildfire emissions, three burned-area products, satellite vegetation fields,
population density, and oceanic/teleconnection index series.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

from .grid import GeoGrid, TimeAxis

TEMPORAL_AGGS = ("mean", "sum", "min", "max", "static")
SPATIAL_KINDS = ("gridded", "scalar-series", "static-map")
RESAMPLE_RULES = ("mean", "nearest", "sum", "none")


@dataclass(frozen=True)
class VariableSpec:
    name: str
    units: str
    temporal_agg: str
    spatial_kind: str = "gridded"
    resample: str = "none"
    source_tag: str = ""

    def __post_init__(self):
        if self.temporal_agg not in TEMPORAL_AGGS:
            raise ValueError(f"unknown temporal_agg {self.temporal_agg!r}")
        if self.spatial_kind not in SPATIAL_KINDS:
            raise ValueError(f"unknown spatial_kind {self.spatial_kind!r}")
        if self.resample not in RESAMPLE_RULES:
            raise ValueError(f"unknown resample rule {self.resample!r}")
        if self.temporal_agg == "static" and self.spatial_kind != "static-map":
            raise ValueError("static aggregation is reserved for static maps")


def _v(name, units, agg, kind="gridded", resample="none", source=""):
    return VariableSpec(name, units, agg, kind, resample, source)


def default_registry():
    """All shipped variable rows, keyed by identifier-safe names."""
    era5 = [
        _v("mean_sea_level_pressure", "Pa", "mean", source="ERA5"),
        _v("total_precipitation", "m", "sum", source="ERA5"),
        _v("relative_humidity", "%", "mean", source="ERA5"),
        _v("vapor_pressure_deficit", "hPa", "mean", source="ERA5"),
        _v("sea_surface_temperature", "K", "mean", source="ERA5"),
        _v("skin_temperature", "K", "mean", source="ERA5"),
        _v("wind_speed_10m", "m s-2", "mean", source="ERA5"),
        _v("t2m_mean", "K", "mean", source="ERA5"),
        _v("t2m_min", "K", "min", source="ERA5"),
        _v("t2m_max", "K", "max", source="ERA5"),
        _v("surface_net_solar_radiation", "MJ m-2", "mean", source="ERA5"),
        _v("surface_solar_radiation_downwards", "MJ m-2", "mean", source="ERA5"),
        _v("volumetric_soil_water_1", "unitless", "mean", source="ERA5"),
    ]
    cems = [
        _v("drought_code_max", "unitless", "max", source="CEMS"),
        _v("fwi_max", "unitless", "max", source="CEMS"),
        _v("fwi_mean", "unitless", "mean", source="CEMS"),
    ]
    cams = [
        _v("co2_wildfires", "m-2 kg s-1", "sum", source="CAMS"),
        _v("fire_radiative_power", "W m-2", "sum", source="CAMS"),
    ]
    burned = [
        _v("burned_areas_fcci", "ha", "sum", resample="sum", source="FCCI"),
        _v("burned_areas_gfed", "ha", "sum", resample="sum", source="GFED"),
        _v("burned_areas_gwis", "ha", "sum", resample="sum", source="GWIS"),
    ]
    modis = [
        _v("lst_day", "K", "mean", resample="mean", source="MODIS"),
        _v("lai", "unitless", "mean", resample="mean", source="MODIS"),
        _v("ndvi", "unitless", "mean", resample="mean", source="MODIS"),
    ]
    sedac = [
        _v("population_density", "persons km-2", "static", "static-map", "mean", "SEDAC"),
    ]
    # Oceanic/teleconnection index series; aggregated as 8-day means of the
    # forward-filled daily series.
    noaa = [
        _v("wp_index", "unitless", "mean", "scalar-series", "none", "NOAA"),
        _v("pna_index", "unitless", "mean", "scalar-series", "none", "NOAA"),
        _v("nao_index", "unitless", "mean", "scalar-series", "none", "NOAA"),
        _v("soi_index", "unitless", "mean", "scalar-series", "none", "NOAA"),
        _v("global_land_ocean_temp", "unitless", "mean", "scalar-series", "none", "NOAA"),
        _v("pdo_index", "unitless", "mean", "scalar-series", "none", "NOAA"),
        _v("ea_wr_index", "unitless", "mean", "scalar-series", "none", "NOAA"),
        _v("ep_np_index", "unitless", "mean", "scalar-series", "none", "NOAA"),
        _v("nino34_anomaly", "unitless", "mean", "scalar-series", "none", "NOAA"),
    ]
    rows = era5 + cems + cams + burned + modis + sedac + noaa
    return {spec.name: spec for spec in rows}


DEFAULT_TARGET_VARIABLE = "burned_areas_gwis"

# Default model input channels; the eighth slot is configurable.
DEFAULT_INPUT_CHANNELS = (
    "lst_day",
    "ndvi",
    "relative_humidity",
    "sea_surface_temperature",
    "t2m_min",
    "total_precipitation",
    "vapor_pressure_deficit",
    "volumetric_soil_water_1",
)


@dataclass(frozen=True)
class CubeManifest:
    """Binding of a variable set to one grid and time axis."""

    variables: tuple
    axis: TimeAxis
    grid: GeoGrid
    attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(names) != len(set(names)):
            raise ValueError("duplicate variable names in manifest")
        object.__setattr__(self, "variables", tuple(self.variables))

    def variable(self, name):
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(f"variable {name!r} not in manifest")

    def names(self):
        return [v.name for v in self.variables]

    def to_attrs(self):
        return {
            "grid": {
                "n_lat": self.grid.n_lat,
                "n_lon": self.grid.n_lon,
                "resolution_deg": self.grid.resolution_deg,
            },
            "time_axis": {
                "start_year": self.axis.start_year,
                "end_year": self.axis.end_year,
                "periods_per_year": self.axis.periods_per_year,
            },
            "variables": [asdict(v) for v in self.variables],
            "attributes": dict(self.attributes),
        }

    @classmethod
    def from_attrs(cls, attrs):
        grid = GeoGrid(
            n_lat=attrs["grid"]["n_lat"],
            n_lon=attrs["grid"]["n_lon"],
            resolution_deg=attrs["grid"]["resolution_deg"],
        )
        axis = TimeAxis(attrs["time_axis"]["start_year"], attrs["time_axis"]["end_year"])
        variables = tuple(VariableSpec(**v) for v in attrs["variables"])
        return cls(variables=variables, axis=axis, grid=grid, attributes=attrs.get("attributes", {}))


def load_manifest(store):
    """Read the manifest a build or generator wrote into the store attrs."""
    return CubeManifest.from_attrs(store.read_attrs())
