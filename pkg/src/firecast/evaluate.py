"""Scoring of prediction shards or the climatology table against a dataset.

Both paths walk the same target/valid arrays, so their reports are directly
comparable (identical pixel populations). Shards are scored independently on
worker threads into per-shard accumulators merged in manifest order; the
result is identical for any worker count.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .climatology import ClimatologyBaseline
from .dataset import load_dataset_manifest
from .metrics import MetricAccumulator
from .shards import read_shard


def _accumulate_pairs(jobs, n_bins, thresholds, workers):
    def run(job):
        acc = MetricAccumulator(n_bins=n_bins, thresholds=thresholds)
        job(acc)
        return acc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(job) for job in jobs]
    total = MetricAccumulator(n_bins=n_bins, thresholds=thresholds)
    for part in parts:
        total.merge(part)
    return total


def evaluate_prediction_shards(lead_dir, pred_dir, split="test", n_bins=8192, thresholds=(0.5,), workers=1):
    """Score prediction shards written alongside a dataset split."""
    lead_dir, pred_dir = Path(lead_dir), Path(pred_dir)
    manifest = load_dataset_manifest(lead_dir)
    with open(pred_dir / "manifest.json", encoding="utf-8") as fh:
        pred_manifest = json.load(fh)
    data_shards = manifest["splits"][split]["shards"]
    pred_shards = pred_manifest["splits"][split]["shards"]
    if len(data_shards) != len(pred_shards):
        raise ValueError(f"{split}: {len(data_shards)} data shards vs {len(pred_shards)} prediction shards")

    def make_job(data_name, pred_name):
        def job(acc):
            data = read_shard(lead_dir / data_name)
            preds = read_shard(pred_dir / pred_name)
            if preds["preds"].shape != data["targets"].shape:
                raise ValueError(f"{pred_name}: prediction shape mismatch")
            if not np.array_equal(preds["meta"], data["meta"]):
                raise ValueError(f"{pred_name}: sample metadata does not match {data_name}")
            acc.update(preds["preds"], data["targets"], data["valid"])

        return job

    jobs = [make_job(d, p) for d, p in zip(data_shards, pred_shards)]
    return _accumulate_pairs(jobs, n_bins, thresholds, workers)


def evaluate_climatology(lead_dir, climatology_store, split="test", n_bins=8192, thresholds=(0.5,), workers=1):
    """Score the seasonal-cycle table over the same split pixels."""
    lead_dir = Path(lead_dir)
    manifest = load_dataset_manifest(lead_dir)
    baseline = ClimatologyBaseline.load_from_store(climatology_store)
    patch_px = manifest["patch_px"]

    def make_job(data_name):
        def job(acc):
            data = read_shard(lead_dir / data_name)
            meta = data["meta"]
            for i in range(meta.shape[0]):
                t_input, lead, r0, c0 = (int(v) for v in meta[i])
                scores = baseline.predict_patch(t_input + lead, (r0, c0), patch_px)
                acc.update(scores, data["targets"][i], data["valid"][i])

        return job

    jobs = [make_job(name) for name in manifest["splits"][split]["shards"]]
    return _accumulate_pairs(jobs, n_bins, thresholds, workers)
