"""Online large-time-step sampling: the 7L scheme and its 7L-CDC variant.

Each time step:

1. predict the ``m`` conditional collocation points for every path in one
   batched predictor call (7L), or only at ``m`` marginal collocation points
   of the current cross-path distribution and interpolate them per path
   (7L-CDC);
2. per path, interpolate the map ``g_m`` through ``(x_j, y_j)`` and evaluate
   it at the path's next standard normal draw;
3. synchronize, then move on to the next step.

Step 2 runs over path groups on the configured backend.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .collocation import CollocationGrid, empirical_collocation, gauss_hermite_grid
from .interp import bary_eval, bary_eval_rows, bary_weights, build_gm, lagrange_basis
from .models import ModelParams, SdeModel, ou_exact_collocation, ou_exact_sample
from .runtime import SequentialBackend, partition_paths
from .simulate import PathSet, RngStream, draw_standard_normal, standard_normals, time_grid

log = logging.getLogger(__name__)

__all__ = [
    "PredictionError",
    "CollocationPredictor",
    "ExactOuPredictor",
    "AnnPredictor",
    "SchemeConfig",
    "SchemeStats",
    "CdcTable",
    "predict_points",
    "predict_points_batch",
    "seven_league_step",
    "simulate_7l",
    "build_cdc_table",
    "cdc_points_for_path",
    "simulate_cdc",
    "simulate_exact",
    "run_scheme",
    "VARIANTS",
]

VARIANTS = ("7l", "7l-cdc")


class PredictionError(RuntimeError):
    pass


class CollocationPredictor:
    """Maps current states to conditional collocation points.

    Subclasses implement :meth:`_predict`; ``calls`` and ``rows`` count
    invocations and predicted rows. A backend passed to a call may be used to
    split the rows of that one invocation across workers.
    """

    def __init__(self, grid: CollocationGrid):
        self.grid = grid
        self.calls = 0
        self.rows = 0

    def __call__(self, states, dt: float, theta: ModelParams, backend=None) -> np.ndarray:
        states = np.asarray(states, dtype=float).ravel()
        self.calls += 1
        self.rows += states.size
        out = self._predict(states, dt, theta, backend)
        if out.shape != (states.size, self.grid.m):
            raise PredictionError(f"predictor returned shape {out.shape}, expected ({states.size}, {self.grid.m})")
        return out

    def _predict(self, states, dt, theta, backend=None):
        raise NotImplementedError


class ExactOuPredictor(CollocationPredictor):
    """Closed-form OU collocation points; stands in for a perfectly trained network."""

    def _predict(self, states, dt, theta, backend=None):
        return ou_exact_collocation(states, dt, theta, self.grid)


class AnnPredictor(CollocationPredictor):
    def __init__(self, mlp, normalization, grid: CollocationGrid):
        super().__init__(grid)
        if mlp.n_outputs != grid.m:
            raise ValueError(f"network has {mlp.n_outputs} outputs but the grid has {grid.m} nodes")
        self.mlp = mlp
        self.normalization = normalization

    def _features(self, states, dt, theta):
        n = states.size
        feats = np.column_stack([
            states,
            np.full(n, dt),
            np.full(n, theta.mean_level),
            np.full(n, theta.reversion_speed),
            np.full(n, theta.volatility),
        ])
        return self.normalization.normalize_x(feats)

    def _predict(self, states, dt, theta, backend=None):
        from .ann import forward

        if backend is None or backend.n_workers == 1:
            return self.normalization.denormalize_y(forward(self.mlp, self._features(states, dt, theta)))
        # the forward pass is row-independent, so splitting rows is exact
        out = np.empty((states.size, self.grid.m))

        def task(lo, hi):
            feats = self._features(states[lo:hi], dt, theta)
            out[lo:hi] = self.normalization.denormalize_y(forward(self.mlp, feats))

        backend.for_each_group(partition_paths(states.size, backend.n_workers), task)
        return out


@dataclass
class SchemeConfig:
    T: float = 2.0
    n_steps: int = 4
    n_paths: int = 10_000
    m: int = 5
    variant: str = "7l"
    sort_repair: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.T > 0 or self.n_steps < 1 or self.n_paths < 1:
            raise ValueError("need T > 0, n_steps >= 1, n_paths >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown scheme variant {self.variant!r}")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps


@dataclass
class SchemeStats:
    sort_repairs: int = 0
    out_of_hull_draws: int = 0
    cdc_out_of_hull: int = 0
    cdc_fallbacks: int = 0
    predictor_calls: int = 0
    predictor_rows_per_step: list = field(default_factory=list)


def _repair(points: np.ndarray, stats: SchemeStats | None, sort: bool = True) -> np.ndarray:
    bad = np.any(np.diff(points, axis=-1) < 0, axis=-1)
    n_bad = int(np.count_nonzero(bad))
    if stats is not None:
        stats.sort_repairs += n_bad
    if n_bad and sort:
        points = np.sort(points, axis=-1)
    return points


def predict_points_batch(pred: CollocationPredictor, states, dt: float, theta: ModelParams,
                         stats: SchemeStats | None = None, sort: bool = True, backend=None) -> np.ndarray:
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt!r}")
    raw = pred(states, dt, theta, backend)
    finite = np.isfinite(raw).all(axis=1)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise PredictionError(f"non-finite collocation points for path {bad} (state {np.ravel(states)[bad]!r})")
    if stats is not None:
        stats.predictor_calls += 1
    return _repair(raw, stats, sort)


def predict_points(pred, y, dt, theta, stats=None) -> np.ndarray:
    return predict_points_batch(pred, [y], dt, theta, stats)[0]


def seven_league_step(y, points, grid: CollocationGrid, stream: RngStream) -> float:
    """Advance one path: sample ``g_m(x)`` with ``x`` the stream's next draw."""
    gm = build_gm(grid, points)
    return bary_eval(gm, draw_standard_normal(stream))


def _gm_task(values, points, nodes, weights, seed, outside):
    x_max = float(np.max(np.abs(nodes)))

    def task(lo, hi, i):
        x = standard_normals(seed, np.arange(lo, hi), i)
        outside[lo:hi] += np.abs(x) > x_max
        values[lo:hi, i + 1] = bary_eval_rows(nodes, weights, points[lo:hi], x)

    return task


def simulate_7l(model: SdeModel, theta: ModelParams, pred: CollocationPredictor, cfg: SchemeConfig,
                backend=None) -> PathSet:
    backend = backend or SequentialBackend()
    grid = pred.grid
    nodes, weights = np.asarray(grid.nodes), bary_weights(grid.nodes)
    dt = cfg.dt
    stats = SchemeStats()
    values = np.empty((cfg.n_paths, cfg.n_steps + 1))
    values[:, 0] = model.initial_value
    outside = np.zeros(cfg.n_paths, dtype=np.int64)
    partition = partition_paths(cfg.n_paths, backend.n_workers)
    with backend:
        for i in range(cfg.n_steps):
            rows_before = pred.rows
            points = predict_points_batch(pred, values[:, i], dt, theta, stats, cfg.sort_repair, backend)
            stats.predictor_rows_per_step.append(pred.rows - rows_before)
            backend.for_each_group(partition, _gm_task(values, points, nodes, weights, cfg.seed, outside), i)
    stats.out_of_hull_draws = int(outside.sum())
    return PathSet(values, time_grid(cfg.T, cfg.n_steps), "7l", cfg.seed, model.name, asdict(stats))


@dataclass(frozen=True, eq=False)
class CdcTable:
    """Conditional collocation points tabulated at marginal collocation states.

    ``table[k, j]`` is the ``j``-th conditional point given state ``z[k]``.
    A one-row table means the current states were all equal.
    """

    z: np.ndarray
    table: np.ndarray
    weights: np.ndarray | None  # None when z has coincident entries

    @property
    def degenerate(self) -> bool:
        return self.z.size == 1


def build_cdc_table(pred: CollocationPredictor, current_states, dt: float, theta: ModelParams,
                    grid: CollocationGrid, stats: SchemeStats | None = None, sort: bool = True) -> CdcTable:
    states = np.asarray(current_states, dtype=float).ravel()
    if states.size < grid.m:
        raise ValueError(f"need at least {grid.m} current states, got {states.size}")
    if np.all(states == states[0]):
        z = states[:1].copy()
    else:
        z = empirical_collocation(states, grid)
    table = predict_points_batch(pred, z, dt, theta, stats, sort)
    weights = bary_weights(z) if z.size > 1 and np.all(np.diff(z) > 0) else None
    return CdcTable(z, table, weights)


def cdc_points_for_path(table: CdcTable, y, stats: SchemeStats | None = None, sort: bool = True,
                        out_of_hull=None) -> np.ndarray:
    """Interpolate every column of the table in the state variable at ``y``.

    Scalar ``y`` gives shape ``(m,)``; an array gives ``(len(y), m)``.
    """
    ys = np.asarray(y, dtype=float)
    flat = ys.ravel()
    if table.degenerate:
        pts = np.broadcast_to(table.table[0], (flat.size, table.table.shape[1])).copy()
    elif table.weights is None:
        nearest = np.argmin(np.abs(flat[:, None] - table.z[None, :]), axis=1)
        pts = table.table[nearest]
        if stats is not None:
            stats.cdc_fallbacks += flat.size
    else:
        basis, hits = lagrange_basis(table.z, table.weights, flat, return_hits=True)
        pts = np.zeros((flat.size, table.table.shape[1]))
        # explicit sum over k keeps each row independent of batch size
        for k in range(table.z.size):
            pts += basis[:, k:k + 1] * table.table[k]
        hit = hits >= 0
        if hit.any():
            pts[hit] = table.table[hits[hit]]
        if out_of_hull is not None:
            out_of_hull += (flat < table.z[0]) | (flat > table.z[-1])
    pts = _repair(pts, stats, sort)
    return pts.reshape(ys.shape + (pts.shape[-1],))


def simulate_cdc(model: SdeModel, theta: ModelParams, pred: CollocationPredictor, cfg: SchemeConfig,
                 backend=None) -> PathSet:
    backend = backend or SequentialBackend()
    grid = pred.grid
    nodes, weights = np.asarray(grid.nodes), bary_weights(grid.nodes)
    dt = cfg.dt
    stats = SchemeStats()
    values = np.empty((cfg.n_paths, cfg.n_steps + 1))
    values[:, 0] = model.initial_value
    outside = np.zeros(cfg.n_paths, dtype=np.int64)
    hull = np.zeros(cfg.n_paths, dtype=np.int64)
    repaired = np.zeros(cfg.n_paths, dtype=np.int64)
    partition = partition_paths(cfg.n_paths, backend.n_workers)
    x_max = float(np.max(np.abs(nodes)))
    fallbacks = 0

    with backend:
        for i in range(cfg.n_steps):
            rows_before = pred.rows
            table = build_cdc_table(pred, values[:, i], dt, theta, grid, stats, cfg.sort_repair)
            stats.predictor_rows_per_step.append(pred.rows - rows_before)
            if table.weights is None and not table.degenerate:
                fallbacks += cfg.n_paths

            def task(lo, hi, i, table=table):
                local = SchemeStats()
                pts = cdc_points_for_path(table, values[lo:hi, i], local, cfg.sort_repair, hull[lo:hi])
                repaired[lo] += local.sort_repairs
                x = standard_normals(cfg.seed, np.arange(lo, hi), i)
                outside[lo:hi] += np.abs(x) > x_max
                values[lo:hi, i + 1] = bary_eval_rows(nodes, weights, pts, x)

            backend.for_each_group(partition, task, i)

    stats.sort_repairs += int(repaired.sum())
    stats.out_of_hull_draws = int(outside.sum())
    stats.cdc_out_of_hull = int(hull.sum())
    stats.cdc_fallbacks = fallbacks
    return PathSet(values, time_grid(cfg.T, cfg.n_steps), "7l-cdc", cfg.seed, model.name, asdict(stats))


def simulate_exact(model: SdeModel, theta: ModelParams, cfg: SchemeConfig, backend=None) -> PathSet:
    """Exact OU transitions driven by the same per-path draws as the schemes."""
    if model.name != "ou":
        raise ValueError("exact simulation is only available for the OU model")
    backend = backend or SequentialBackend()
    dt = cfg.dt
    values = np.empty((cfg.n_paths, cfg.n_steps + 1))
    values[:, 0] = model.initial_value
    partition = partition_paths(cfg.n_paths, backend.n_workers)

    def task(lo, hi, i):
        x = standard_normals(cfg.seed, np.arange(lo, hi), i)
        values[lo:hi, i + 1] = ou_exact_sample(values[lo:hi, i], dt, theta, x)

    with backend:
        for i in range(cfg.n_steps):
            backend.for_each_group(partition, task, i)
    return PathSet(values, time_grid(cfg.T, cfg.n_steps), "exact", cfg.seed, model.name)


def run_scheme(scheme: str, model: SdeModel, theta: ModelParams, cfg: SchemeConfig,
               pred: CollocationPredictor | None = None, backend=None) -> PathSet:
    """Dispatch on ``scheme`` in ``{7l, 7l-cdc, euler, exact}``."""
    from .simulate import euler_paths

    if scheme in VARIANTS:
        if pred is None:
            pred = ExactOuPredictor(gauss_hermite_grid(cfg.m))
        cfg = SchemeConfig(**{**asdict(cfg), "variant": scheme})
        run = simulate_7l if scheme == "7l" else simulate_cdc
        return run(model, theta, pred, cfg, backend)
    if scheme == "euler":
        return euler_paths(model, theta, cfg.T, cfg.n_steps, cfg.n_paths, cfg.seed, backend)
    if scheme == "exact":
        return simulate_exact(model, theta, cfg, backend)
    raise ValueError(f"unknown scheme {scheme!r}")
