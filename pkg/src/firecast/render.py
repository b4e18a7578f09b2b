"""Global map rendering to PNG.

Values below the missing threshold (and NaN) draw in the missing color;
everything else is normalized (linear or log) and looked up in an ordered
color ramp, so color position preserves value order. Output bytes are a pure
function of the field and spec.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from PIL import Image

DEFAULT_MISSING_COLOR = (235, 235, 235)
# light yellow -> orange -> dark red
DEFAULT_PALETTE = (
    (0.0, (255, 237, 160)),
    (0.5, (254, 140, 60)),
    (1.0, (128, 0, 38)),
)


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class RenderSpec:
    missing_threshold: float = 1e-4
    palette: tuple = DEFAULT_PALETTE
    scale: str = "linear"
    out_format: str = "PNG"
    missing_color: tuple = DEFAULT_MISSING_COLOR

    def __post_init__(self):
        if self.missing_threshold < 0:
            raise RenderError("missing_threshold must be >= 0")
        if self.scale not in ("linear", "log"):
            raise RenderError(f"unknown scale {self.scale!r}")
        if self.out_format != "PNG":
            raise RenderError("only PNG output is supported")
        stops = [v for v, _ in self.palette]
        if len(stops) < 2 or any(b <= a for a, b in zip(stops, stops[1:])):
            raise RenderError("palette stops must be strictly increasing")


def load_palette(path):
    with open(path, encoding="utf-8") as fh:
        stops = json.load(fh)
    return tuple((float(s["value"]), tuple(int(c) for c in s["color"])) for s in stops)


def _positions(values, spec: RenderSpec):
    """Monotone [0,1] palette positions for visible (non-missing) values."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return values
    if spec.scale == "log":
        values = np.log(values)
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.full(values.shape, 0.5)
    return (values - lo) / (hi - lo)


def _apply_palette(positions, spec: RenderSpec):
    stops = np.array([v for v, _ in spec.palette])
    colors = np.array([c for _, c in spec.palette], dtype=np.float64)
    t = np.clip(positions, stops[0], stops[-1])
    idx = np.clip(np.searchsorted(stops, t, side="right") - 1, 0, len(stops) - 2)
    span = stops[idx + 1] - stops[idx]
    frac = (t - stops[idx]) / span
    rgb = colors[idx] + frac[..., None] * (colors[idx + 1] - colors[idx])
    return np.round(rgb).astype(np.uint8)


def render_map(values, spec: RenderSpec, out_path, grid=None):
    """Render an (n_lat, n_lon) field; returns the missing-pixel fraction."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise RenderError(f"expected a 2-D field, got shape {values.shape}")
    if grid is not None and values.shape != grid.shape:
        raise RenderError(f"field shape {values.shape} does not match grid {grid.shape}")
    missing = ~np.isfinite(values) | (values < spec.missing_threshold)
    if spec.scale == "log":
        missing |= values <= 0
    image = np.empty(values.shape + (3,), dtype=np.uint8)
    image[missing] = spec.missing_color
    if (~missing).any():
        positions = _positions(values[~missing], spec)
        image[~missing] = _apply_palette(positions, spec)
    Image.fromarray(image, mode="RGB").save(out_path, format="PNG")
    return float(missing.mean())


def render_pair(prediction, target, spec: RenderSpec, out_path, gap_px=4):
    """Prediction and target side by side with a white gap, one PNG."""
    prediction = np.asarray(prediction, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if prediction.shape != target.shape:
        raise RenderError("prediction and target shapes differ")

    def panel(vals):
        missing = ~np.isfinite(vals) | (vals < spec.missing_threshold)
        if spec.scale == "log":
            missing |= vals <= 0
        img = np.empty(vals.shape + (3,), dtype=np.uint8)
        img[missing] = spec.missing_color
        if (~missing).any():
            img[~missing] = _apply_palette(_positions(vals[~missing], spec), spec)
        return img

    gap = np.full((prediction.shape[0], gap_px, 3), 255, dtype=np.uint8)
    combined = np.concatenate([panel(prediction), gap, panel(target)], axis=1)
    Image.fromarray(combined, mode="RGB").save(out_path, format="PNG")


def assemble_global_field(shard_arrays, array_name, t_target, grid_shape, invalid_to_nan=True):
    """Paste patches back onto the global canvas for one target step.

    `shard_arrays` yields shard dicts holding `meta` plus the named array;
    patches whose meta matches the target step land at their tile origin,
    cropped to the grid. Uncovered cells stay NaN.
    """
    canvas = np.full(grid_shape, np.nan, dtype=np.float64)
    for arrays in shard_arrays:
        meta = arrays["meta"]
        data = arrays[array_name]
        valid = arrays.get("valid")
        for i in range(meta.shape[0]):
            t_input, lead, r0, c0 = (int(v) for v in meta[i])
            if t_input + lead != t_target:
                continue
            patch = data[i].astype(np.float64)
            if invalid_to_nan and valid is not None:
                patch = np.where(valid[i] > 0, patch, np.nan)
            rows = max(0, min(patch.shape[0], grid_shape[0] - r0))
            cols = max(0, min(patch.shape[1], grid_shape[1] - c0))
            canvas[r0 : r0 + rows, c0 : c0 + cols] = patch[:rows, :cols]
    return canvas
