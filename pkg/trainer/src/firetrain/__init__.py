"""UNet++ trainer for burned-area patch shards."""

__version__ = "0.1.0"

from .shards import read_shard, write_shard, load_manifest
from .train import TrainerConfig, dry_run_selection, select_best_epoch, train
from .predict import predict
from .unetpp import UNetPlusPlus, masked_bce_loss

__all__ = [
    "TrainerConfig",
    "UNetPlusPlus",
    "dry_run_selection",
    "load_manifest",
    "masked_bce_loss",
    "predict",
    "read_shard",
    "select_best_epoch",
    "train",
    "write_shard",
]
