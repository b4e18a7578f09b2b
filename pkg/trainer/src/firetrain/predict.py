"""Inference: checkpoint + dataset shards -> prediction shards.

Output layout mirrors the data engine's own predictor (``pred_<shard>`` files
plus a manifest), so the engine's ``eval`` subcommand scores these without
modification.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch

from .shards import iter_split, load_manifest, write_shard
from .unetpp import UNetPlusPlus


def load_checkpoint(path):
    checkpoint = torch.load(path, map_location="cpu", weights_only=True)
    config = checkpoint["config"]
    model = UNetPlusPlus(
        in_channels=checkpoint["n_channels"],
        depth=config["depth"],
        encoder=config["encoder"],
        base_width=config["base_width"],
    )
    model.load_state_dict(checkpoint["model_state"])
    model.eval()
    return model, checkpoint


def predict(checkpoint_path, lead_dir, out_dir, splits=("test",), batch_size=8):
    model, checkpoint = load_checkpoint(checkpoint_path)
    manifest = load_manifest(lead_dir)
    if len(manifest["channels"]) != checkpoint["n_channels"]:
        raise ValueError(
            f"checkpoint expects {checkpoint['n_channels']} channels, "
            f"dataset has {len(manifest['channels'])}"
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_manifest = {"lead_steps": manifest["lead_steps"], "splits": {}}
    for split in splits:
        files = []
        for name, arrays in iter_split(lead_dir, split, manifest):
            inputs = torch.from_numpy(arrays["inputs"])
            chunks = []
            with torch.no_grad():
                for start in range(0, inputs.shape[0], batch_size):
                    chunks.append(torch.sigmoid(model(inputs[start : start + batch_size])))
            preds = torch.cat(chunks).numpy().astype("<f4")
            out_name = f"pred_{name}"
            write_shard(out_dir / out_name, {"preds": preds, "meta": arrays["meta"]})
            files.append(out_name)
        out_manifest["splits"][split] = {"shards": files}
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(out_manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out_manifest
