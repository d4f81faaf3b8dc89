"""Offline-trained feedforward SNR estimator on one-bit observations.

Two feature maps are supported:

``raw``
    the one-bit vector itself.  Over i.i.d. Rayleigh channels every sign is
    marginally a fair coin at any SNR, so this map carries almost no
    information; it is kept for comparison.
``window``
    ``T`` repeats of one pilot vector seen through the initial dither; the
    feature is the sorted magnitude of the per-antenna sign mean.  Sorting
    makes it invariant to the antenna order.

A single window is a noisy SNR witness (several dB of spread), and averaging
per-window regressions inherits the regression-to-the-mean bias of each one.
``pool > 1`` therefore averages the window features of ``pool`` windows that
share one channel (different pilots of the same coherence block) before the
forward pass; estimates over more windows average the per-pool outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from onebit_ml.numerics import ConfigError, DomainError
from onebit_ml.signal_model import build_symbol_table, one_bit_quantize

MODEL_MAGIC = "onebit-ml mlp v1"


class TrainingError(RuntimeError):
    """Raised when the loss stops being finite."""


@dataclass
class SnrDataset:
    features: np.ndarray
    labels: np.ndarray
    feature: str = "window"
    window: int = 1
    pool: int = 1

    def __len__(self):
        return len(self.labels)

    def split(self, val_fraction: float, rng: np.random.Generator):
        idx = rng.permutation(len(self))
        n_val = int(round(val_fraction * len(self)))
        val, tr = idx[:n_val], idx[n_val:]
        return (
            SnrDataset(self.features[tr], self.labels[tr], self.feature, self.window, self.pool),
            SnrDataset(self.features[val], self.labels[val], self.feature, self.window, self.pool),
        )


def window_features(signs: np.ndarray) -> np.ndarray:
    """Sorted |mean sign| per antenna; ``signs`` is ``(..., T, 2nr)``."""
    return np.sort(np.abs(np.mean(signs, axis=-2)), axis=-1)


def extract_features(signs: np.ndarray, feature: str) -> np.ndarray:
    if feature == "raw":
        return np.asarray(signs, dtype=float)
    if feature == "window":
        return window_features(signs)
    raise ConfigError(f"unknown feature map {feature!r}")


def build_snr_dataset(
    nu: int,
    nr: int,
    m: int,
    snr_grid_db,
    samples_per_snr: int,
    rng: np.random.Generator,
    feature: str = "window",
    window: int = 15,
    sigma2: float = 0.5,
    rho: float = 1.0,
    pool: int = 1,
) -> SnrDataset:
    """Labelled feature vectors, one fresh channel per sample.

    Each sample averages the features of ``pool`` random pilots seen over
    that channel.  With ``feature="raw"`` a pilot contributes one
    undithered observation.
    """
    snr_grid_db = list(snr_grid_db)
    if not snr_grid_db:
        raise ConfigError("empty SNR grid")
    if samples_per_snr < 1 or window < 1 or pool < 1:
        raise ConfigError("sample count, window and pool must be positive")
    symbols = build_symbol_table(m, nu)
    t = 1 if feature == "raw" else window
    dither = 0.0 if feature == "raw" else sigma2
    feats, labels = [], []
    for snr_db in snr_grid_db:
        n0 = rho / 10.0 ** (snr_db / 10.0)
        n = samples_per_snr
        re = rng.standard_normal((n, nu, nr)) * math.sqrt(0.5)
        im = rng.standard_normal((n, nu, nr)) * math.sqrt(0.5)
        h = np.concatenate(
            [np.concatenate([re, im], axis=2), np.concatenate([-im, re], axis=2)], axis=1
        )
        s = symbols.real_vectors[rng.integers(0, symbols.k, (n, pool))]
        clean = math.sqrt(rho) * np.einsum("npj,nji->npi", s, h)
        std = math.sqrt((n0 + dither) / 2.0)
        r = clean[:, :, None, :] + std * rng.standard_normal((n, pool, t, 2 * nr))
        obs = one_bit_quantize(r)
        f = extract_features(obs[:, :, 0, :] if feature == "raw" else obs, feature)
        feats.append(f.mean(axis=1))
        labels.append(np.full(n, float(snr_db)))
    return SnrDataset(np.concatenate(feats), np.concatenate(labels), feature, t, pool)


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    raise ConfigError(f"unknown activation {kind!r}")


def _act_grad(z, a, kind):
    if kind == "relu":
        return (z > 0).astype(float)
    if kind == "tanh":
        return 1.0 - a * a
    return a * (1.0 - a)


@dataclass
class MlpModel:
    """Affine-output MLP; ``weights[l]`` has shape ``(out, in)``.

    Predictions are ``label_mean + label_scale * net(x)`` in dB.  ``pool``
    is the number of windows whose features form one input.
    """

    weights: list
    biases: list
    activation: str = "relu"
    feature: str = "window"
    window: int = 15
    label_mean: float = 0.0
    label_scale: float = 1.0
    pool: int = 1

    def __post_init__(self):
        for w, w_next in zip(self.weights, self.weights[1:]):
            if w_next.shape[1] != w.shape[0]:
                raise ConfigError("adjacent layer widths do not match")
        if self.weights[-1].shape[0] != 1:
            raise ConfigError("output layer must be scalar")
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[0],):
                raise ConfigError("bias shape mismatch")

    @classmethod
    def init(cls, widths, rng, activation="relu", **kw) -> "MlpModel":
        ws, bs = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            ws.append(rng.standard_normal((fan_out, fan_in)) * math.sqrt(2.0 / fan_in))
            bs.append(np.zeros(fan_out))
        return cls(ws, bs, activation, **kw)

    @property
    def input_width(self) -> int:
        return self.weights[0].shape[1]

    def net(self, x: np.ndarray) -> np.ndarray:
        a = np.atleast_2d(x)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = _act(a @ w.T + b, self.activation)
        return (a @ self.weights[-1].T + self.biases[-1])[:, 0]

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if x.shape[1] != self.input_width:
            raise DomainError(f"feature width {x.shape[1]} != model input {self.input_width}")
        return self.label_mean + self.label_scale * self.net(x)

    def loss_and_grads(self, x: np.ndarray, target: np.ndarray):
        """Mean squared error of ``net`` against ``target`` and its gradients."""
        x = np.atleast_2d(x)
        zs, acts = [], [x]
        a = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = a @ w.T + b
            a = _act(z, self.activation)
            zs.append(z)
            acts.append(a)
        out = (a @ self.weights[-1].T + self.biases[-1])[:, 0]
        err = out - target
        loss = float(np.mean(err**2))
        delta = (2.0 / len(x)) * err[:, None]
        gw, gb = [None] * len(self.weights), [None] * len(self.weights)
        for layer in range(len(self.weights) - 1, -1, -1):
            gw[layer] = delta.T @ acts[layer]
            gb[layer] = delta.sum(axis=0)
            if layer:
                back = delta @ self.weights[layer]
                delta = back * _act_grad(zs[layer - 1], acts[layer], self.activation)
        return loss, gw, gb

    def save(self, path) -> None:
        lines = [
            MODEL_MAGIC,
            f"activation={self.activation} feature={self.feature} window={self.window} "
            f"label_mean={self.label_mean!r} label_scale={self.label_scale!r} "
            f"pool={self.pool} layers={len(self.weights)}",
        ]
        for w, b in zip(self.weights, self.biases):
            lines.append(f"W {w.shape[0]} {w.shape[1]}")
            lines.extend(" ".join(repr(float(v)) for v in row) for row in w)
            lines.append("b " + " ".join(repr(float(v)) for v in b))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "MlpModel":
        lines = Path(path).read_text().splitlines()
        if not lines or lines[0] != MODEL_MAGIC:
            raise ConfigError(f"{path}: not an MLP weight file")
        hdr = dict(tok.split("=", 1) for tok in lines[1].split())
        pos, ws, bs = 2, [], []
        for _ in range(int(hdr["layers"])):
            _, rows, cols = lines[pos].split()
            rows, cols = int(rows), int(cols)
            w = np.array([[float(v) for v in ln.split()] for ln in lines[pos + 1 : pos + 1 + rows]])
            ws.append(w.reshape(rows, cols))
            bs.append(np.array([float(v) for v in lines[pos + 1 + rows].split()[1:]]))
            pos += rows + 2
        return cls(
            ws,
            bs,
            hdr["activation"],
            hdr["feature"],
            int(hdr["window"]),
            float(hdr["label_mean"]),
            float(hdr["label_scale"]),
            int(hdr["pool"]),
        )


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_rmse: list = field(default_factory=list)


def train_snr_estimator(
    data: SnrDataset,
    rng: np.random.Generator,
    hidden=(64, 32),
    epochs: int = 60,
    lr: float = 3e-3,
    batch_size: int = 128,
    val_data: SnrDataset | None = None,
    activation: str = "relu",
):
    """Mini-batch Adam on the squared dB error; returns ``(model, history)``."""
    if len(data) == 0:
        raise ConfigError("empty training set")
    mean = float(np.mean(data.labels))
    scale = float(np.std(data.labels)) or 1.0
    target = (data.labels - mean) / scale
    widths = [data.features.shape[1], *hidden, 1]
    model = MlpModel.init(
        widths, rng, activation, feature=data.feature, window=data.window,
        label_mean=mean, label_scale=scale, pool=data.pool,
    )
    params = model.weights + model.biases
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    b1, b2, eps, step = 0.9, 0.999, 1e-8, 0
    hist = TrainHistory()
    for epoch in range(epochs):
        order = rng.permutation(len(data))
        total = 0.0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            loss, gw, gb = model.loss_and_grads(data.features[idx], target[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"loss became {loss} at epoch {epoch}, batch offset {start}")
            total += loss * len(idx)
            step += 1
            for j, (p, g) in enumerate(zip(params, gw + gb)):
                m1[j] = b1 * m1[j] + (1 - b1) * g
                m2[j] = b2 * m2[j] + (1 - b2) * g * g
                p -= lr * (m1[j] / (1 - b1**step)) / (np.sqrt(m2[j] / (1 - b2**step)) + eps)
        hist.train_loss.append(total / len(data) * scale**2)
        if val_data is not None:
            hist.val_rmse.append(rmse(model, val_data))
    return model, hist


def rmse(model: MlpModel, data: SnrDataset) -> float:
    return float(np.sqrt(np.mean((model.predict(data.features) - data.labels) ** 2)))


def estimate_snr(windows: np.ndarray, model: MlpModel) -> float:
    """SNR estimate in dB from observations over one channel.

    ``windows`` is ``(n, T, 2nr)``, a single ``(T, 2nr)`` window, or for a
    raw-feature model a stack of observations ``(n, 2nr)``.  Features of
    consecutive groups of ``model.pool`` windows are averaged into one
    input (a short trailing group is dropped unless it is the only one) and
    the per-group estimates are averaged.
    """
    windows = np.asarray(windows)
    if windows.size == 0:
        raise DomainError("empty observation window")
    if model.feature == "raw":
        feats = windows.reshape(-1, windows.shape[-1]).astype(float)
    else:
        if windows.ndim == 2:
            windows = windows[None]
        if windows.shape[1] < model.window:
            raise DomainError(f"window of {windows.shape[1]} slots, model needs {model.window}")
        feats = window_features(windows[:, : model.window, :])
    if feats.shape[1] != model.input_width:
        raise DomainError(f"feature width {feats.shape[1]} != model input {model.input_width}")
    n_groups = max(1, len(feats) // model.pool)
    groups = [
        feats[g * model.pool : (g + 1) * model.pool].mean(axis=0) for g in range(n_groups)
    ]
    return float(np.mean(model.predict(np.stack(groups))))
