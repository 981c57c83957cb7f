"""Small multilayer perceptron for collocation-point regression.

A single network maps ``(y_start, dt, ybar, lambda, sigma)`` to all ``m``
conditional collocation points. Softplus hidden layers, identity output,
Glorot-uniform initialization, MSE loss and Adam. Everything is plain numpy.

Hidden and output affine maps go through ``np.einsum`` (not BLAS) so that a
row's output does not depend on the batch it was evaluated in.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

log = logging.getLogger(__name__)

__all__ = [
    "Mlp",
    "AdamState",
    "Normalization",
    "TrainConfig",
    "TrainResult",
    "ModelFormatError",
    "glorot_init",
    "init_mlp",
    "softplus",
    "forward",
    "loss_and_grad",
    "adam_step",
    "train",
    "save_model",
    "load_model",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


@dataclass
class Mlp:
    layer_sizes: list[int]
    weights: list[np.ndarray]  # layer l: (fan_out, fan_in)
    biases: list[np.ndarray]

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


@dataclass
class Normalization:
    x_shift: np.ndarray
    x_scale: np.ndarray
    y_shift: np.ndarray
    y_scale: np.ndarray

    @classmethod
    def fit(cls, features, labels) -> "Normalization":
        def scale(a):
            s = a.std(axis=0)
            return np.where(s > 0, s, 1.0)

        return cls(features.mean(axis=0), scale(features), labels.mean(axis=0), scale(labels))

    def normalize_x(self, x):
        return (x - self.x_shift) / self.x_scale

    def normalize_y(self, y):
        return (y - self.y_shift) / self.y_scale

    def denormalize_y(self, y):
        return y * self.y_scale + self.y_shift


def glorot_init(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    if fan_in < 1 or fan_out < 1:
        raise ValueError("fan_in and fan_out must be >= 1")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_mlp(layer_sizes, rng: np.random.Generator) -> Mlp:
    sizes = [int(s) for s in layer_sizes]
    weights = [glorot_init(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(b) for b in sizes[1:]]
    return Mlp(sizes, weights, biases)


def softplus(z):
    z = np.asarray(z, dtype=float)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _affine(a, W, b):
    return np.einsum("bi,oi->bo", a, W) + b


def _check_batch(mlp: Mlp, batch) -> np.ndarray:
    batch = np.asarray(batch, dtype=float)
    if batch.ndim != 2 or batch.shape[1] != mlp.n_inputs:
        raise ValueError(f"expected a batch of width {mlp.n_inputs}, got shape {batch.shape}")
    return batch


def forward(mlp: Mlp, batch) -> np.ndarray:
    a = _check_batch(mlp, batch)
    n_layers = len(mlp.weights)
    for l, (W, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = _affine(a, W, b)
        a = softplus(z) if l < n_layers - 1 else z
    return a


def loss_and_grad(mlp: Mlp, batch, targets):
    """Mean squared error over batch and outputs, and its parameter gradients.

    Gradients come back in ``mlp.params`` order: ``[dW_0, db_0, dW_1, ...]``.
    """
    a = _check_batch(mlp, batch)
    targets = np.asarray(targets, dtype=float)
    if targets.shape != (a.shape[0], mlp.n_outputs):
        raise ValueError(f"targets shape {targets.shape} does not match ({a.shape[0]}, {mlp.n_outputs})")
    n_layers = len(mlp.weights)
    acts, pre = [a], []
    for l, (W, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = _affine(acts[-1], W, b)
        pre.append(z)
        acts.append(softplus(z) if l < n_layers - 1 else z)
    resid = acts[-1] - targets
    mse = float(np.mean(resid**2))

    grads = [None] * (2 * n_layers)
    dz = 2.0 * resid / max(resid.size, 1)
    for l in range(n_layers - 1, -1, -1):
        grads[2 * l] = dz.T @ acts[l]
        grads[2 * l + 1] = dz.sum(axis=0)
        if l:
            dz = (dz @ mlp.weights[l]) * expit(pre[l - 1])
    return mse, grads


def adam_step(state: AdamState, params, grads, lr: float):
    """Bias-corrected Adam update, applied in place to ``params``."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 1024
    lr: float = 1e-3
    seed: int = 0
    hidden: tuple[int, ...] = (50, 50, 50, 50)
    val_fraction: float = 0.1
    patience: int = 20


@dataclass
class TrainResult:
    mlp: Mlp
    normalization: Normalization
    history: list[tuple[int, float, float, float]] = field(default_factory=list)
    config: TrainConfig = field(default_factory=TrainConfig)
    adam: AdamState | None = None

    @property
    def best_val_mse(self) -> float:
        return self.history[-1][3] if self.history else float("nan")


def train(dataset, config: TrainConfig | None = None, **overrides) -> TrainResult:
    """Fit an MLP to ``dataset.features -> dataset.labels``.

    Keeps the parameters with the lowest validation MSE (normalized units)
    and stops after ``patience`` epochs without improvement. History rows are
    ``(epoch, train_mse, val_mse, best_val_mse)``.
    """
    config = config or TrainConfig()
    if overrides:
        config = TrainConfig(**{**asdict(config), **overrides})
    X = np.asarray(dataset.features, dtype=float)
    Y = np.asarray(dataset.labels, dtype=float)
    n = X.shape[0]
    if n == 0:
        raise ValueError("training set is empty")

    rng = np.random.default_rng(config.seed)
    order = rng.permutation(n)
    n_val = int(round(config.val_fraction * n)) if n > 1 else 0
    n_val = min(max(n_val, 1 if n > 1 else 0), n - 1)
    val_idx, fit_idx = order[:n_val], order[n_val:]

    norm = Normalization.fit(X[fit_idx], Y[fit_idx])
    Xn, Yn = norm.normalize_x(X), norm.normalize_y(Y)
    Xfit, Yfit = Xn[fit_idx], Yn[fit_idx]
    Xval, Yval = (Xn[val_idx], Yn[val_idx]) if n_val else (Xfit, Yfit)

    mlp = init_mlp([X.shape[1], *config.hidden, Y.shape[1]], rng)
    adam = AdamState.zeros_like(mlp.params)
    best = copy.deepcopy(mlp)
    best_val = np.inf
    stale = 0
    history = []
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(len(fit_idx))
        total = 0.0
        for start in range(0, len(perm), config.batch_size):
            idx = perm[start:start + config.batch_size]
            mse, grads = loss_and_grad(mlp, Xfit[idx], Yfit[idx])
            adam_step(adam, mlp.params, grads, config.lr)
            total += mse * len(idx)
        train_mse = total / len(perm)
        val_mse = float(np.mean((forward(mlp, Xval) - Yval) ** 2))
        if val_mse < best_val:
            best_val, best, stale = val_mse, copy.deepcopy(mlp), 0
        else:
            stale += 1
        history.append((epoch, train_mse, val_mse, best_val))
        if epoch % 10 == 0 or epoch == 1:
            log.info("epoch %d train %.3e val %.3e best %.3e", epoch, train_mse, val_mse, best_val)
        if stale >= config.patience:
            log.info("early stop at epoch %d", epoch)
            break
    return TrainResult(best, norm, history, config, adam)


def _floats(a) -> list[float]:
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def save_model(mlp: Mlp, normalization: Normalization, path, *, adam: AdamState | None = None,
               training_config: TrainConfig | None = None) -> None:
    adam = adam or AdamState([], [])
    doc = {
        "format_version": FORMAT_VERSION,
        "layer_sizes": list(mlp.layer_sizes),
        "activation": "softplus",
        "weights": [_floats(W) for W in mlp.weights],
        "biases": [_floats(b) for b in mlp.biases],
        "normalization": {k: _floats(v) for k, v in asdict(normalization).items()},
        "adam_meta": {"beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps, "steps": adam.t},
        "training_config": asdict(training_config) if training_config else {},
    }
    # repr-based float output is the shortest string that round-trips exactly
    Path(path).write_text(json.dumps(doc))


def load_model(path) -> tuple[Mlp, Normalization]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: top-level value must be an object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(f"format_version: expected {FORMAT_VERSION}, got {doc.get('format_version')!r}")
    if doc.get("activation") != "softplus":
        raise ModelFormatError(f"activation: unsupported value {doc.get('activation')!r}")
    sizes = doc.get("layer_sizes")
    if not (isinstance(sizes, list) and len(sizes) >= 2
            and all(isinstance(s, int) and s >= 1 for s in sizes)):
        raise ModelFormatError(f"layer_sizes: expected a list of >= 2 positive ints, got {sizes!r}")
    weights, biases = doc.get("weights"), doc.get("biases")
    n_layers = len(sizes) - 1
    if not isinstance(weights, list) or len(weights) != n_layers:
        raise ModelFormatError(f"layer_sizes: {sizes} implies {n_layers} weight matrices, "
                               f"found {len(weights) if isinstance(weights, list) else weights!r}")
    if not isinstance(biases, list) or len(biases) != n_layers:
        raise ModelFormatError(f"layer_sizes: {sizes} implies {n_layers} bias vectors")
    Ws, bs = [], []
    for l, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        W = np.asarray(weights[l], dtype=float)
        b = np.asarray(biases[l], dtype=float)
        if W.size != fan_in * fan_out:
            raise ModelFormatError(f"weights[{l}]: expected {fan_out}x{fan_in} entries, got {W.size}")
        if b.size != fan_out:
            raise ModelFormatError(f"biases[{l}]: expected {fan_out} entries, got {b.size}")
        Ws.append(W.reshape(fan_out, fan_in))
        bs.append(b)
    nd = doc.get("normalization")
    try:
        norm = Normalization(**{k: np.asarray(nd[k], dtype=float)
                                for k in ("x_shift", "x_scale", "y_shift", "y_scale")})
    except (TypeError, KeyError) as exc:
        raise ModelFormatError(f"normalization: missing or malformed ({exc!r})") from exc
    if norm.x_scale.size != sizes[0] or norm.y_scale.size != sizes[-1]:
        raise ModelFormatError("normalization: sizes do not match layer_sizes")
    if np.any(norm.x_scale <= 0) or np.any(norm.y_scale <= 0):
        raise ModelFormatError("normalization: scales must be positive")
    return Mlp(list(sizes), Ws, bs), norm
