"""Secondary acceptance gate: boundary, selection rule, spatial lift, overfit.

Run with ``pytest tests/test_acceptance_secondary.py -v -s``. The
spatial-context criterion trains a UNet++ for ~7 minutes on CPU; everything
else is fast. Requires the ``firecast`` package (the data engine) in the same
environment — its CLI and validator are the boundary under test.
"""

import json
import subprocess
import sys
import time

import numpy as np
import pytest
import torch

from firetrain.predict import predict
from firetrain.shards import read_shard
from firetrain.train import TrainerConfig, train
from firetrain.unetpp import UNetPlusPlus, masked_bce_loss

firecast = pytest.importorskip("firecast")

from firecast.dataset import extract_dataset  # noqa: E402
from firecast.grid import GeoGrid  # noqa: E402
from firecast.model import predict_to_shards, train_on_shards  # noqa: E402
from firecast.shards import validate_shard  # noqa: E402
from firecast.synth import WorldConfig, generate_world  # noqa: E402


def _ok(n, message):
    print(f"\n[criterion {n}] PASS — {message}")


def _cli(*argv):
    return subprocess.run([sys.executable, "-m", "firecast.cli", *map(str, argv)],
                          capture_output=True, text=True)


@pytest.fixture(scope="module")
def spatial_world(tmp_path_factory):
    """World with a neighborhood term only a spatial model can exploit."""
    root = tmp_path_factory.mktemp("spatial")
    config = WorldConfig(seed=42, grid=GeoGrid.small(64), years=4, neighborhood_weight=6.0)
    generate_world(config, root / "cube")
    extract_dataset(root / "cube", root / "data", leads=(1,))
    return root


def test_criterion_9_boundary_shards_validate_and_score(spatial_world, tmp_path):
    lead_dir = spatial_world / "data" / "lead_1"
    config = TrainerConfig(epochs=1, seed=0, checkpoint_dir=str(tmp_path / "ckpt"))
    checkpoint, _, _ = train(lead_dir, config)
    out = tmp_path / "preds"
    manifest = predict(checkpoint, lead_dir, out, splits=("test",))
    assert manifest["splits"]["test"]["shards"]
    for name in manifest["splits"]["test"]["shards"]:
        header = validate_shard(out / name)  # the data engine's own validator
        assert [e["name"] for e in header["arrays"]] == ["preds", "meta"]
    proc = _cli("eval", "--data", lead_dir, "--preds", out, "--out", tmp_path / "eval")
    assert proc.returncode == 0, proc.stderr
    report = json.loads((tmp_path / "eval" / "report_lead_1_predictions.json").read_text())
    assert 0.0 <= report["auprc"] <= 1.0 and report["n_pixels"] > 0
    _ok(9, f"trainer shards pass the engine validator; engine eval scores them "
           f"(AUPRC {report['auprc']:.3f} over {report['n_pixels']} pixels)")


def test_criterion_10_dry_run_selection_rule(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "firetrain.cli", "dry-run", "--val-losses", "0.5,0.3,0.4",
         "--log", str(tmp_path / "log.jsonl")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["selected_epoch"] == 2
    entries = [json.loads(line) for line in (tmp_path / "log.jsonl").read_text().splitlines()]
    assert [e["selected"] for e in entries] == [False, True, False]
    _ok(10, "injected val losses [0.5, 0.3, 0.4] select epoch 2")


def test_criterion_11_spatial_context_lift(spatial_world, tmp_path):
    start = time.time()
    lead_dir = spatial_world / "data" / "lead_1"

    ref_model, _ = train_on_shards(lead_dir, seed=0)
    predict_to_shards(ref_model, lead_dir, tmp_path / "ref_preds")
    proc = _cli("eval", "--data", lead_dir, "--preds", tmp_path / "ref_preds", "--out", tmp_path / "ref_eval")
    assert proc.returncode == 0, proc.stderr
    ref = json.loads((tmp_path / "ref_eval" / "report_lead_1_predictions.json").read_text())

    config = TrainerConfig(epochs=30, seed=0, checkpoint_dir=str(tmp_path / "ckpt"))
    checkpoint, _, best_epoch = train(lead_dir, config)
    predict(checkpoint, lead_dir, tmp_path / "unet_preds")
    proc = _cli("eval", "--data", lead_dir, "--preds", tmp_path / "unet_preds", "--out", tmp_path / "unet_eval")
    assert proc.returncode == 0, proc.stderr
    unet = json.loads((tmp_path / "unet_eval" / "report_lead_1_predictions.json").read_text())

    elapsed = time.time() - start
    assert unet["n_pixels"] == ref["n_pixels"]
    assert unet["auprc"] >= ref["auprc"], (
        f"UNet++ {unet['auprc']:.4f} below per-pixel reference {ref['auprc']:.4f}"
    )
    assert elapsed < 900.0, f"spatial-lift run took {elapsed:.0f}s"
    _ok(11, f"UNet++ AUPRC {unet['auprc']:.4f} >= per-pixel {ref['auprc']:.4f} "
            f"(lift {unet['auprc'] - ref['auprc']:+.4f}, best epoch {best_epoch}, {elapsed:.0f}s)")


def test_criterion_12_overfit_four_patches(tmp_path):
    generate_world(WorldConfig(seed=31, grid=GeoGrid.small(32), years=3), tmp_path / "cube")
    extract_dataset(tmp_path / "cube", tmp_path / "data", leads=(1,))
    from firetrain.shards import iter_split

    xs, ys, vs = [], [], []
    for _, arrays in iter_split(tmp_path / "data" / "lead_1", "train"):
        xs.append(arrays["inputs"])
        ys.append(arrays["targets"])
        vs.append(arrays["valid"])
    X = torch.from_numpy(np.concatenate(xs)[:4])
    y = torch.from_numpy(np.concatenate(ys)[:4])
    valid = torch.from_numpy(np.concatenate(vs)[:4])

    torch.manual_seed(0)
    model = UNetPlusPlus(in_channels=8)
    optimizer = torch.optim.Adam(model.parameters(), lr=3e-3)
    final = None
    for epoch in range(1, 251):
        optimizer.zero_grad()
        loss = masked_bce_loss(model(X), y, valid)
        loss.backward()
        optimizer.step()
        final = float(loss.detach())
        if final < 0.01:
            break
    assert final < 0.01, f"train loss stuck at {final:.4f} after {epoch} epochs"
    _ok(12, f"4-patch train loss {final:.4f} < 0.01 at epoch {epoch}")
