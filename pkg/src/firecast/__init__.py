"""Burned-area forecasting toolkit: datacube engine, dataset builder,
baselines, imbalance-aware metrics, and map rendering."""

__version__ = "0.1.0"

from .grid import GeoGrid, PatchGridSpec, TimeAxis, tile_patches
from .store import ArraySpec, ZarrArray, ZarrStore
from .variables import CubeManifest, VariableSpec, default_registry
from .metrics import MetricAccumulator, MetricsReport, average_precision, f1_score_at, roc_auc
from .climatology import ClimatologyBaseline
from .dataset import ChannelNormalizer, SplitSpec, extract_dataset
from .model import PixelLogisticModel
from .synth import WorldConfig, generate_world

__all__ = [
    "ArraySpec",
    "ChannelNormalizer",
    "ClimatologyBaseline",
    "CubeManifest",
    "GeoGrid",
    "MetricAccumulator",
    "MetricsReport",
    "PatchGridSpec",
    "PixelLogisticModel",
    "SplitSpec",
    "TimeAxis",
    "VariableSpec",
    "WorldConfig",
    "ZarrArray",
    "ZarrStore",
    "average_precision",
    "default_registry",
    "extract_dataset",
    "f1_score_at",
    "generate_world",
    "roc_auc",
    "tile_patches",
]
