"""Training loop: masked cross entropy, best-validation-epoch checkpointing.

The epoch log is JSON lines; the checkpoint keeps the winning epoch's weights
(ties go to the earliest epoch, matching the evaluation protocol elsewhere in
the pipeline). A dry-run mode exercises the selection rule on injected
validation losses without touching any data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import torch

from .shards import iter_split, load_manifest
from .unetpp import UNetPlusPlus, masked_bce_loss


@dataclass(frozen=True)
class TrainerConfig:
    encoder: str = "small-conv"
    depth: int = 3
    base_width: int = 16
    epochs: int = 30
    batch_size: int = 8
    learning_rate: float = 1e-3
    seed: int = 0
    checkpoint_dir: str = "checkpoints"


def select_best_epoch(val_losses):
    """Index of the minimum validation loss; earliest epoch wins ties."""
    best = 0
    for i, v in enumerate(val_losses):
        if v < val_losses[best]:
            best = i
    return best


def _load_split_tensors(lead_dir, split, manifest):
    inputs, targets, valid = [], [], []
    for _, arrays in iter_split(lead_dir, split, manifest):
        inputs.append(torch.from_numpy(arrays["inputs"]))
        targets.append(torch.from_numpy(arrays["targets"]))
        valid.append(torch.from_numpy(arrays["valid"]))
    if not inputs:
        raise ValueError(f"split {split!r} is empty")
    return torch.cat(inputs), torch.cat(targets), torch.cat(valid)


def _epoch_val_loss(model, val_data, batch_size):
    X, y, m = val_data
    model.eval()
    total, weight = 0.0, 0.0
    with torch.no_grad():
        for start in range(0, X.shape[0], batch_size):
            xb = X[start : start + batch_size]
            yb = y[start : start + batch_size]
            mb = m[start : start + batch_size]
            n_valid = float(mb.sum())
            if n_valid == 0:
                continue
            total += float(masked_bce_loss(model(xb), yb, mb)) * n_valid
            weight += n_valid
    model.train()
    return total / weight


def train(lead_dir, config: TrainerConfig, log_path=None):
    """Train on the manifest's train split, select by val loss, checkpoint."""
    torch.manual_seed(config.seed)
    manifest = load_manifest(lead_dir)
    n_channels = len(manifest["channels"])
    model = UNetPlusPlus(
        in_channels=n_channels, depth=config.depth, encoder=config.encoder, base_width=config.base_width
    )
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    X, y, m = _load_split_tensors(lead_dir, "train", manifest)
    val_data = _load_split_tensors(lead_dir, "val", manifest)

    checkpoint_dir = Path(config.checkpoint_dir)
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    log_entries = []
    generator = torch.Generator().manual_seed(config.seed)
    best_val, best_state, best_epoch = float("inf"), None, 0
    for epoch in range(1, config.epochs + 1):
        order = torch.randperm(X.shape[0], generator=generator)
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, X.shape[0], config.batch_size):
            batch = order[start : start + config.batch_size]
            optimizer.zero_grad()
            loss = masked_bce_loss(model(X[batch]), y[batch], m[batch])
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss)
            n_batches += 1
        val_loss = _epoch_val_loss(model, val_data, config.batch_size)
        entry = {"epoch": epoch, "train_loss": epoch_loss / n_batches, "val_loss": val_loss}
        log_entries.append(entry)
        if val_loss < best_val:  # strict: earliest epoch keeps ties
            best_val = val_loss
            best_epoch = epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}

    model.load_state_dict(best_state)
    checkpoint = {
        "model_state": model.state_dict(),
        "config": asdict(config),
        "n_channels": n_channels,
        "patch_px": manifest["patch_px"],
        "lead_steps": manifest["lead_steps"],
        "best_epoch": best_epoch,
        "best_val_loss": best_val,
    }
    checkpoint_path = checkpoint_dir / "best.pt"
    torch.save(checkpoint, checkpoint_path)
    if log_path:
        with open(log_path, "w", encoding="utf-8") as fh:
            for entry in log_entries:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
    return checkpoint_path, log_entries, best_epoch


def dry_run_selection(val_losses, log_path=None):
    """Apply the checkpoint selection rule to injected validation losses."""
    best = select_best_epoch(val_losses)
    entries = [
        {"epoch": i + 1, "val_loss": v, "selected": i == best} for i, v in enumerate(val_losses)
    ]
    if log_path:
        with open(log_path, "w", encoding="utf-8") as fh:
            for entry in entries:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
    return best + 1  # 1-based epoch number
