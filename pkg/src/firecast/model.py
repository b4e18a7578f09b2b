"""Per-pixel trainable reference predictor.

A logistic regression over the input channels (optionally with one tanh
hidden layer), trained by plain mini-batch gradient descent with analytic
gradients and double-precision accumulation. The epoch whose validation loss
is lowest wins (ties go to the earliest epoch). Being per-pixel, predictions
are equivariant to any reordering of tiles; spatial context is deliberately
out of reach.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .dataset import iter_split, load_dataset_manifest
from .shards import write_shard


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss; carries the epoch log."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


def sigmoid(z):
    """Overflow-safe logistic; exact 0/1 only in the float limit."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softplus(z):
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def n_parameters(n_channels, hidden_units):
    if hidden_units == 0:
        return n_channels + 1
    return n_channels * hidden_units + hidden_units + hidden_units + 1


def unpack_params(theta, n_channels, hidden_units):
    theta = np.asarray(theta, dtype=np.float64)
    if hidden_units == 0:
        return {"w": theta[:n_channels], "b": theta[n_channels]}
    k = n_channels * hidden_units
    return {
        "w1": theta[:k].reshape(n_channels, hidden_units),
        "b1": theta[k : k + hidden_units],
        "w2": theta[k + hidden_units : k + 2 * hidden_units],
        "b2": theta[k + 2 * hidden_units],
    }


def forward_logits(theta, X, hidden_units=0):
    """Pixel logits; X is (n, channels) and must be finite."""
    X = np.asarray(X, dtype=np.float64)
    if not np.isfinite(X).all():
        raise ValueError("inputs must be finite (impute before forward)")
    p = unpack_params(theta, X.shape[1], hidden_units)
    if hidden_units == 0:
        return X @ p["w"] + p["b"]
    hidden = np.tanh(X @ p["w1"] + p["b1"])
    return hidden @ p["w2"] + p["b2"]


def forward(theta, X, hidden_units=0):
    return sigmoid(forward_logits(theta, X, hidden_units))


def loss_and_grad(theta, X, y, hidden_units=0, pos_weight=1.0):
    """Mean binary cross entropy over pixels and its analytic gradient.

    Computed from logits (never from clamped probabilities), so it is stable
    for |logit| far beyond anything training produces.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    n, c = X.shape
    p = unpack_params(theta, c, hidden_units)
    if hidden_units == 0:
        z = X @ p["w"] + p["b"]
    else:
        pre = X @ p["w1"] + p["b1"]
        hidden = np.tanh(pre)
        z = hidden @ p["w2"] + p["b2"]
    weights = np.where(y == 1, pos_weight, 1.0)
    # softplus(z) - y z == -[y log p + (1-y) log(1-p)]
    loss = float(np.sum(weights * (_softplus(z) - y * z)) / np.sum(weights))
    dz = weights * (sigmoid(z) - y) / np.sum(weights)
    if hidden_units == 0:
        grad = np.concatenate([X.T @ dz, [dz.sum()]])
    else:
        dw2 = hidden.T @ dz
        db2 = dz.sum()
        dhidden = np.outer(dz, p["w2"]) * (1.0 - hidden * hidden)
        dw1 = X.T @ dhidden
        db1 = dhidden.sum(axis=0)
        grad = np.concatenate([dw1.ravel(), db1, dw2, [db2]])
    return loss, grad


def select_best_epoch(val_losses):
    """Index of the minimum validation loss; ties go to the earliest epoch."""
    best = 0
    for i, v in enumerate(val_losses):
        if v < val_losses[best]:
            best = i
    return best


class PixelLogisticModel(BaseEstimator):
    """Mini-batch gradient-descent logistic model over pixel feature vectors."""

    def __init__(self, hidden_units=0, learning_rate=2.0, batch_size=8192, epochs=30, seed=0, pos_weight=1.0):
        self.hidden_units = hidden_units
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.pos_weight = pos_weight

    def _init_theta(self, n_channels, rng):
        n = n_parameters(n_channels, self.hidden_units)
        if self.hidden_units == 0:
            return np.zeros(n)
        theta = 0.01 * rng.standard_normal(n)
        theta[-1] = 0.0
        return theta

    def fit(self, X, y, validation=None):
        """Train on pixels (n, channels) / labels (n,); `validation` is an
        optional (X_val, y_val) pair driving best-epoch selection."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        rng = np.random.default_rng(self.seed)
        theta = self._init_theta(X.shape[1], rng)
        history = []
        best_theta, best_val, best_epoch = theta.copy(), np.inf, self.epochs
        for epoch in range(1, self.epochs + 1):
            order = rng.permutation(X.shape[0])
            epoch_loss = 0.0
            n_batches = 0
            for start in range(0, X.shape[0], self.batch_size):
                batch = order[start : start + self.batch_size]
                loss, grad = loss_and_grad(
                    theta, X[batch], y[batch], self.hidden_units, self.pos_weight
                )
                if not np.isfinite(loss):
                    raise DivergenceError(f"non-finite loss at epoch {epoch}", history)
                theta = theta - self.learning_rate * grad
                epoch_loss += loss
                n_batches += 1
            entry = {"epoch": epoch, "train_loss": epoch_loss / max(n_batches, 1)}
            if validation is not None:
                val_loss, _ = loss_and_grad(
                    theta, validation[0], validation[1], self.hidden_units, self.pos_weight
                )
                if not np.isfinite(val_loss):
                    raise DivergenceError(f"non-finite validation loss at epoch {epoch}", history)
                entry["val_loss"] = val_loss
                if val_loss < best_val:  # strict: ties keep the earliest epoch
                    best_val, best_theta, best_epoch = val_loss, theta.copy(), epoch
            history.append(entry)
        if validation is not None:
            self.theta_ = best_theta
            self.best_epoch_ = best_epoch
        else:
            self.theta_ = theta
            self.best_epoch_ = self.epochs
        self.n_channels_ = X.shape[1]
        self.history_ = history
        return self

    def _check_fitted(self):
        if not hasattr(self, "theta_"):
            raise NotFittedError("PixelLogisticModel is not fitted")

    def decision_function(self, X):
        self._check_fitted()
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.n_channels_:
            raise ValueError(f"expected {self.n_channels_} channels, got {X.shape[1]}")
        return forward_logits(self.theta_, X, self.hidden_units)

    def predict_proba(self, X):
        p = sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    @property
    def coef_(self):
        self._check_fitted()
        if self.hidden_units == 0:
            return self.theta_[: self.n_channels_]
        raise AttributeError("coef_ is only defined for the linear model")


# ---------------------------------------------------------------------------
# shard-level orchestration


def gather_pixels(lead_dir, split, manifest=None):
    """Valid pixels of a split as (X (n, channels) float32, y (n,) uint8)."""
    xs, ys = [], []
    for _, arrays in iter_split(lead_dir, split, manifest):
        valid = arrays["valid"].astype(bool)
        inputs = arrays["inputs"]  # (N, C, P, P)
        n_c = inputs.shape[1]
        x = inputs.transpose(0, 2, 3, 1)[valid]  # (n_valid, C)
        xs.append(x.reshape(-1, n_c))
        ys.append(arrays["targets"][valid])
    if not xs:
        raise ValueError(f"split {split!r} has no shards")
    return np.concatenate(xs), np.concatenate(ys)


def dataset_fingerprint(lead_dir):
    raw = (Path(lead_dir) / "manifest.json").read_bytes()
    return hashlib.sha256(raw).hexdigest()


def train_on_shards(lead_dir, hidden_units=0, learning_rate=2.0, batch_size=8192, epochs=30, seed=0, pos_weight=1.0):
    manifest = load_dataset_manifest(lead_dir)
    X_train, y_train = gather_pixels(lead_dir, "train", manifest)
    X_val, y_val = gather_pixels(lead_dir, "val", manifest)
    model = PixelLogisticModel(hidden_units, learning_rate, batch_size, epochs, seed, pos_weight)
    model.fit(X_train, y_train, validation=(X_val, y_val))
    return model, model.history_


def save_model(model, path, lead_dir=None):
    model._check_fitted()
    doc = {
        "kind": "pixel-logistic",
        "hidden_units": model.hidden_units,
        "n_channels": model.n_channels_,
        "theta": [float(v) for v in model.theta_],
        "best_epoch": model.best_epoch_,
        "config": {
            "learning_rate": model.learning_rate,
            "batch_size": model.batch_size,
            "epochs": model.epochs,
            "seed": model.seed,
            "pos_weight": model.pos_weight,
        },
        "train_fingerprint": dataset_fingerprint(lead_dir) if lead_dir else None,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    model = PixelLogisticModel(hidden_units=doc["hidden_units"], **doc["config"])
    model.theta_ = np.asarray(doc["theta"], dtype=np.float64)
    model.n_channels_ = doc["n_channels"]
    model.best_epoch_ = doc["best_epoch"]
    return model


def predict_to_shards(model, lead_dir, out_dir, splits=("test",)):
    """Write probability shards aligned one-to-one with the dataset shards."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = load_dataset_manifest(lead_dir)
    out_manifest = {"lead_steps": manifest["lead_steps"], "splits": {}}
    for split in splits:
        files = []
        for path, arrays in iter_split(lead_dir, split, manifest):
            inputs = arrays["inputs"]
            n, c, ph, pw = inputs.shape
            flat = inputs.transpose(0, 2, 3, 1).reshape(-1, c)
            probs = model.predict_proba(flat)[:, 1].reshape(n, ph, pw)
            name = f"pred_{Path(path).name}"
            write_shard(out_dir / name, {"preds": probs.astype("<f4"), "meta": arrays["meta"]})
            files.append(name)
        out_manifest["splits"][split] = {"shards": files}
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(out_manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out_manifest
