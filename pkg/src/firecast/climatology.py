"""Weekly-mean seasonal cycle baseline.

Scores each (cell, period-of-year) by its historical mean burned area over
the fit years. The ranking is what matters: AUPRC and AUROC are invariant to
any strictly increasing rescaling, so the hectare-valued table is squashed
through x/(1+x) only to satisfy the [0,1] score interface of the streaming
evaluator. The table depends on the target step alone, never on the lead.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .grid import PERIODS_PER_YEAR
from .store import ArraySpec, ZarrStore

CLIMATOLOGY_ARRAY = "climatology"


class ClimatologyBaseline(BaseEstimator):
    """Per-cell, per-period-of-year mean burned area (hectares)."""

    def fit(self, burned, axis, years):
        """Fit from a (time, lat, lon) burned-area stack on the given axis.

        NaN observations are excluded; cells with no valid observation in any
        fit year stay NaN in the table.
        """
        burned = np.asarray(burned, dtype=np.float64)
        years = sorted(set(int(y) for y in years))
        if not years:
            raise ValueError("empty fit year set")
        axis_years = set(range(axis.start_year, axis.end_year + 1))
        missing = [y for y in years if y not in axis_years]
        if missing:
            raise ValueError(f"fit years {missing} outside axis {axis.start_year}..{axis.end_year}")
        table = np.full((PERIODS_PER_YEAR,) + burned.shape[1:], np.nan)
        for p in range(PERIODS_PER_YEAR):
            steps = [(y - axis.start_year) * PERIODS_PER_YEAR + p for y in years]
            stack = burned[steps]
            count = (~np.isnan(stack)).sum(axis=0)
            total = np.nansum(stack, axis=0)
            table[p] = np.divide(total, count, out=np.full(count.shape, np.nan), where=count > 0)
        self.table_ = table
        self.fit_years_ = tuple(years)
        return self

    @classmethod
    def fit_from_store(cls, store, variable, years):
        from .variables import load_manifest

        manifest = load_manifest(store)
        burned = store.open_array(variable).read_full().astype(np.float64)
        return cls().fit(burned, manifest.axis, years)

    def _check_fitted(self):
        if not hasattr(self, "table_"):
            raise NotFittedError("ClimatologyBaseline is not fitted")

    def predict_field(self, t_target):
        """Raw hectare-valued score field for the target step's period-of-year."""
        self._check_fitted()
        return self.table_[t_target % PERIODS_PER_YEAR]

    def predict_patch(self, t_target, origin, patch_px):
        """Squashed [0,1) score patch cropped at a tile origin; NaN scores 0."""
        field = self.predict_field(t_target)
        r0, c0 = origin
        patch = np.zeros((patch_px, patch_px))
        rows = max(0, min(patch_px, field.shape[0] - r0))
        cols = max(0, min(patch_px, field.shape[1] - c0))
        patch[:rows, :cols] = np.nan_to_num(field[r0 : r0 + rows, c0 : c0 + cols], nan=0.0)
        return squash_scores(patch)

    def save_to_store(self, store_root):
        self._check_fitted()
        store = ZarrStore.create(store_root)
        n_lat, n_lon = self.table_.shape[1:]
        spec = ArraySpec(CLIMATOLOGY_ARRAY, (PERIODS_PER_YEAR, n_lat, n_lon), (1, n_lat, n_lon))
        handle = store.create_array(spec, attrs={"fit_years": list(self.fit_years_)})
        handle.write_region((0, 0, 0), self.table_.astype("<f4"))
        return handle

    @classmethod
    def load_from_store(cls, store_root):
        store = ZarrStore.open(store_root)
        handle = store.open_array(CLIMATOLOGY_ARRAY)
        baseline = cls()
        baseline.table_ = handle.read_full().astype(np.float64)
        baseline.fit_years_ = tuple(handle.read_attrs().get("fit_years", ()))
        return baseline


def squash_scores(values):
    """Monotone map from [0, inf) hectares to [0, 1) ranking scores."""
    values = np.asarray(values, dtype=np.float64)
    return values / (1.0 + values)
