"""Random streams, Euler-Maruyama stepping and offline training data.

Every path owns a stream keyed by ``(master_seed, stream_id)``; draw ``i`` of
that stream is a pure function of ``(master_seed, stream_id, i)``, computed
with the Philox4x32-10 counter-based generator. Values therefore never depend
on how paths are split across workers.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .collocation import CollocationGrid, empirical_collocation
from .models import ModelParams, SdeModel, ou_exact_collocation, ou_model

log = logging.getLogger(__name__)

__all__ = [
    "philox4x32",
    "standard_normals",
    "RngStream",
    "draw_standard_normal",
    "euler_step",
    "euler_path",
    "euler_paths",
    "PathSet",
    "FeatureRanges",
    "TrainingSet",
    "generate_training_set",
    "FEATURE_NAMES",
]

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)


def philox4x32(counter, key, rounds: int = 10):
    """Philox4x32 block function, vectorized over counters.

    ``counter`` is a sequence of four uint32 arrays (broadcastable), ``key``
    a pair of ints. Returns four uint32 arrays.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK32 for c in counter)
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _SHIFT32, p0 & _MASK32
        hi1, lo1 = p1 >> _SHIFT32, p1 & _MASK32
        c0, c1, c2, c3 = (
            hi1 ^ c1 ^ np.uint64(k0),
            lo1,
            hi0 ^ c3 ^ np.uint64(k1),
            lo0,
        )
    return tuple(c.astype(np.uint32) for c in (c0, c1, c2, c3))


def _split64(v):
    v = np.asarray(v, dtype=np.uint64)
    return v & _MASK32, v >> _SHIFT32


def standard_normals(seed: int, stream_ids, counter) -> np.ndarray:
    """N(0,1) draw number ``counter`` of each stream in ``stream_ids``.

    One Philox block per draw: 53 bits of it form an open-interval uniform
    that is pushed through the inverse normal CDF.
    """
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    ids_lo, ids_hi = _split64(stream_ids)
    ctr_lo, ctr_hi = _split64(counter)
    w0, w1, _, _ = philox4x32((ctr_lo, ctr_hi, ids_lo, ids_hi), (seed & 0xFFFFFFFF, seed >> 32))
    a = (w0 >> np.uint32(5)).astype(np.float64)
    b = (w1 >> np.uint32(6)).astype(np.float64)
    u = (a * 67108864.0 + b + 0.5) * (1.0 / 9007199254740992.0)
    return ndtri(u)


@dataclass
class RngStream:
    master_seed: int
    stream_id: int
    counter: int = 0


def draw_standard_normal(stream: RngStream) -> float:
    x = float(standard_normals(stream.master_seed, stream.stream_id, stream.counter))
    stream.counter += 1
    return x


def euler_step(y, t: float, dt: float, model: SdeModel, theta: ModelParams, x):
    """One Euler-Maruyama step driven by the standard normal draw ``x``."""
    return y + model.drift(t, y, theta) * dt + model.diffusion(t, y, theta) * math.sqrt(dt) * x


def euler_path(model: SdeModel, theta: ModelParams, T: float, n_steps: int, stream: RngStream) -> np.ndarray:
    if n_steps < 1 or not T > 0:
        raise ValueError("need n_steps >= 1 and T > 0")
    dt = T / n_steps
    path = np.empty(n_steps + 1)
    path[0] = model.initial_value
    for i in range(n_steps):
        x = draw_standard_normal(stream)
        path[i + 1] = euler_step(path[i], i * dt, dt, model, theta, x)
    return path


@dataclass
class PathSet:
    """Path realizations, one row per path, one column per time point."""

    values: np.ndarray
    times: np.ndarray
    scheme: str
    seed: int
    model: str = "ou"
    stats: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1] - 1

    @property
    def dt(self) -> float:
        return float(self.times[-1]) / self.n_steps

    def to_csv(self, path) -> None:
        header = ",".join(f"t_{i}" for i in range(self.n_steps + 1))
        np.savetxt(path, self.values, delimiter=",", fmt="%.17g", header=header, comments="")

    @staticmethod
    def read_csv_values(path) -> np.ndarray:
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def time_grid(T: float, n_steps: int) -> np.ndarray:
    return np.arange(n_steps + 1) * (T / n_steps)


def euler_paths(model: SdeModel, theta: ModelParams, T: float, n_steps: int, n_paths: int,
                seed: int, backend=None) -> PathSet:
    """Euler-Maruyama paths; path ``p`` uses stream ``p`` and one draw per step."""
    from .runtime import SequentialBackend, partition_paths

    if n_steps < 1 or n_paths < 1 or not T > 0:
        raise ValueError("need n_steps >= 1, n_paths >= 1 and T > 0")
    backend = backend or SequentialBackend()
    dt = T / n_steps
    values = np.empty((n_paths, n_steps + 1))
    values[:, 0] = model.initial_value
    partition = partition_paths(n_paths, backend.n_workers)

    def task(lo, hi, i):
        x = standard_normals(seed, np.arange(lo, hi), i)
        values[lo:hi, i + 1] = euler_step(values[lo:hi, i], i * dt, dt, model, theta, x)

    with backend:
        for i in range(n_steps):
            backend.for_each_group(partition, task, i)
    return PathSet(values, time_grid(T, n_steps), "euler", seed, model.name)


FEATURE_NAMES = ("y_start", "dt", "ybar", "lambda", "sigma")


@dataclass
class FeatureRanges:
    """Uniform sampling box for training features."""

    y_start: tuple[float, float] = (-2.0, 2.0)
    dt: tuple[float, float] = (0.05, 2.0)
    ybar: tuple[float, float] = (-1.0, 1.0)
    reversion: tuple[float, float] = (0.1, 2.0)
    sigma: tuple[float, float] = (0.1, 1.0)

    def as_list(self) -> list[tuple[float, float]]:
        return [tuple(map(float, r)) for r in (self.y_start, self.dt, self.ybar, self.reversion, self.sigma)]

    @classmethod
    def from_list(cls, rows) -> "FeatureRanges":
        return cls(*(tuple(r) for r in rows))


@dataclass
class TrainingSet:
    features: np.ndarray  # (n, 5): y_start, dt, ybar, lambda, sigma
    labels: np.ndarray    # (n, m), each row ascending
    meta: dict

    def __len__(self):
        return self.features.shape[0]

    def save(self, csv_path) -> Path:
        """Write the CSV plus a ``.json`` sidecar with the generation metadata."""
        csv_path = Path(csv_path)
        m = self.labels.shape[1]
        header = ",".join(list(FEATURE_NAMES) + [f"y_{j + 1}" for j in range(m)])
        np.savetxt(csv_path, np.hstack([self.features, self.labels]), delimiter=",",
                   fmt="%.17g", header=header, comments="")
        sidecar = csv_path.with_suffix(".json")
        sidecar.write_text(json.dumps(self.meta, indent=2))
        return sidecar

    @classmethod
    def load(cls, csv_path) -> "TrainingSet":
        csv_path = Path(csv_path)
        with open(csv_path) as fh:
            header = fh.readline().strip().split(",")
        if tuple(header[:5]) != FEATURE_NAMES:
            raise ValueError(f"{csv_path}: unexpected header {header[:5]}")
        data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
        sidecar = csv_path.with_suffix(".json")
        meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
        return cls(data[:, :5].copy(), data[:, 5:].copy(), meta)


def _sample_features(ranges: FeatureRanges, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    cols = [rng.uniform(lo, hi, n) for lo, hi in ranges.as_list()]
    return np.column_stack(cols)


def _euler_terminal(row, inner_paths: int, fine_dt: float, seed: int, first_stream: int) -> np.ndarray:
    y_start, horizon, ybar, lam, sigma = row
    theta = ModelParams(ybar, lam, sigma)
    model = ou_model(y_start)
    n_sub = max(1, math.ceil(horizon / fine_dt - 1e-9))
    h = horizon / n_sub
    ids = first_stream + np.arange(inner_paths, dtype=np.uint64)
    y = np.full(inner_paths, y_start)
    for k in range(n_sub):
        x = standard_normals(seed, ids, k) if sigma > 0 else 0.0
        y = euler_step(y, k * h, h, model, theta, x)
    return y


def generate_training_set(
    n_samples: int,
    grid: CollocationGrid,
    ranges: FeatureRanges | None = None,
    inner_paths: int = 100_000,
    fine_dt: float = 1e-3,
    seed: int = 0,
    labels: str = "euler",
) -> TrainingSet:
    """Sample feature rows and label them with conditional collocation points.

    ``labels="euler"`` simulates ``inner_paths`` fine-step Euler paths per row
    and takes empirical quantiles of their terminal values. ``labels="exact"``
    uses the closed-form OU collocation points instead.
    """
    ranges = ranges or FeatureRanges()
    bounds = ranges.as_list()
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    for (lo, hi), name in zip(bounds, FEATURE_NAMES):
        if not lo <= hi:
            raise ValueError(f"empty sampling range for {name}: {(lo, hi)}")
    if labels not in ("euler", "exact"):
        raise ValueError(f"unknown label source {labels!r}")
    if labels == "euler":
        if inner_paths < grid.m:
            raise ValueError(f"inner_paths={inner_paths} is below the number of collocation points {grid.m}")
        if not 0 < fine_dt <= bounds[1][0]:
            raise ValueError(f"fine_dt={fine_dt} must be positive and not exceed the smallest dt {bounds[1][0]}")

    features = _sample_features(ranges, n_samples, seed)
    out = np.empty((n_samples, grid.m))
    for r, row in enumerate(features):
        if labels == "exact":
            out[r] = ou_exact_collocation(row[0], row[1], ModelParams(*row[2:]), grid)
        else:
            terminal = _euler_terminal(row, inner_paths, fine_dt, seed, r * inner_paths)
            out[r] = empirical_collocation(terminal, grid)
        if labels == "euler" and r and r % 100 == 0:
            log.info("labelled %d/%d rows", r, n_samples)
    out.sort(axis=1)
    meta = {
        "m": grid.m,
        "label_source": labels,
        "fine_dt": fine_dt,
        "inner_paths": inner_paths,
        "seed": seed,
        "ranges": dict(zip(FEATURE_NAMES, bounds)),
    }
    return TrainingSet(features, out, meta)
