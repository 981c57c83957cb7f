"""Error metrics, convergence studies and speedup benchmarks."""

from __future__ import annotations

import csv
import io
import logging
import os
import statistics
from dataclasses import dataclass, field

import numpy as np

from .models import ModelParams, ou_conditional_moments, ou_exact_sample, ou_model
from .runtime import PoolBackend, SequentialBackend, timed
from .scheme import SchemeConfig, run_scheme
from .simulate import PathSet, standard_normals

log = logging.getLogger(__name__)

__all__ = [
    "ErrorReport",
    "BenchRow",
    "BenchReport",
    "strong_error",
    "weak_error",
    "convergence_study",
    "write_error_csv",
    "speedup",
    "format_speedup",
    "speedup_bench",
    "steps_for_dt",
]


@dataclass(frozen=True)
class ErrorReport:
    dt: float
    scheme: str
    strong_error: float
    weak_error: float
    n_paths: int


def _require_ou(paths: PathSet):
    if paths.model != "ou":
        raise ValueError(f"no exact reference for model {paths.model!r}; error metrics need the OU model")


def coupled_reference(paths: PathSet, theta: ModelParams, seed: int | None = None) -> np.ndarray:
    """Exact OU terminal values driven by the same per-path draws the scheme used."""
    _require_ou(paths)
    seed = paths.seed if seed is None else seed
    ids = np.arange(paths.n_paths)
    dt = paths.dt
    ref = paths.values[:, 0].copy()
    for i in range(paths.n_steps):
        ref = ou_exact_sample(ref, dt, theta, standard_normals(seed, ids, i))
    return ref


def strong_error(paths: PathSet, theta: ModelParams, seed: int | None = None) -> float:
    """Mean absolute terminal deviation from the coupled exact solution."""
    ref = coupled_reference(paths, theta, seed)
    return float(np.mean(np.abs(paths.values[:, -1] - ref)))


def weak_error(paths: PathSet, theta: ModelParams) -> float:
    """Absolute error of the terminal sample mean against the analytic mean."""
    _require_ou(paths)
    y0 = float(paths.values[0, 0])
    exact = ou_conditional_moments(y0, float(paths.times[-1]), theta).mean
    return float(abs(np.mean(paths.values[:, -1]) - exact))


def steps_for_dt(T: float, dt: float) -> int:
    n = round(T / dt)
    if n < 1 or abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"time step {dt} does not divide the horizon {T}")
    return int(n)


def convergence_study(dts, schemes, theta: ModelParams, *, y0: float = 1.0, T: float = 2.0,
                      n_paths: int = 10_000, seed: int = 0, predictor=None, backend=None,
                      m: int = 5) -> list[ErrorReport]:
    model = ou_model(y0)
    reports = []
    for scheme in schemes:
        for dt in dts:
            cfg = SchemeConfig(T=T, n_steps=steps_for_dt(T, dt), n_paths=n_paths, m=m, seed=seed)
            paths = run_scheme(scheme, model, theta, cfg, predictor, backend)
            rep = ErrorReport(float(dt), scheme, strong_error(paths, theta), weak_error(paths, theta), n_paths)
            log.info("%s dt=%g strong=%.3e weak=%.3e", scheme, dt, rep.strong_error, rep.weak_error)
            reports.append(rep)
    return reports


def _g17(v) -> str:
    return format(v, ".17g")


def write_error_csv(reports, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["dt", "scheme", "strong_error", "weak_error", "n_paths"])
    for r in reports:
        w.writerow([_g17(r.dt), r.scheme, _g17(r.strong_error), _g17(r.weak_error), r.n_paths])


def speedup(sequential_seconds: float, parallel_seconds: float) -> float:
    """Sequential wall time over parallel wall time (larger is faster)."""
    if not parallel_seconds > 0:
        raise ValueError("parallel time must be positive")
    return sequential_seconds / parallel_seconds


def format_speedup(value: float) -> str:
    return f"{value:.1f}"


@dataclass(frozen=True)
class BenchRow:
    n_paths: int
    scheme: str
    sequential_seconds: float
    parallel_seconds: float

    @property
    def speedup(self) -> float:
        return speedup(self.sequential_seconds, self.parallel_seconds)


@dataclass
class BenchReport:
    rows: list[BenchRow]
    repeats: int
    backend: str
    environment: dict = field(default_factory=dict)

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_paths", "scheme", "sequential_seconds", "parallel_seconds", "speedup"])
        for r in self.rows:
            w.writerow([r.n_paths, r.scheme, _g17(r.sequential_seconds), _g17(r.parallel_seconds), _g17(r.speedup)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    def format_table(self) -> str:
        lines = [f"{'paths':>10} {'scheme':>7} {'seq [s]':>10} {'par [s]':>10} {'speedup':>8}"]
        for r in self.rows:
            lines.append(f"{r.n_paths:>10,} {r.scheme:>7} {r.sequential_seconds:>10.4f} "
                         f"{r.parallel_seconds:>10.4f} {format_speedup(r.speedup):>8}")
        env = ", ".join(f"{k}={v}" for k, v in self.environment.items())
        lines.append(f"backend {self.backend}, median of {self.repeats} runs; {env}")
        return "\n".join(lines)


def _median_time(run, repeats: int) -> float:
    run()  # warm-up, excluded
    return statistics.median(timed(run)[1] for _ in range(repeats))


def speedup_bench(path_counts, schemes, theta: ModelParams, *, backend=None, repeats: int = 10,
                  seed: int = 0, y0: float = 1.0, T: float = 2.0, n_steps: int = 4,
                  predictor=None, m: int = 5) -> BenchReport:
    """Time each (path count, scheme) cell sequentially and on ``backend``."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    backend = backend or PoolBackend()
    seq = SequentialBackend()
    model = ou_model(y0)
    rows = []
    for n_paths in path_counts:
        for scheme in schemes:
            cfg = SchemeConfig(T=T, n_steps=n_steps, n_paths=int(n_paths), m=m, seed=seed)
            t_seq = _median_time(lambda: run_scheme(scheme, model, theta, cfg, predictor, seq), repeats)
            t_par = _median_time(lambda: run_scheme(scheme, model, theta, cfg, predictor, backend), repeats)
            row = BenchRow(int(n_paths), scheme, t_seq, t_par)
            log.info("%d paths %s: seq %.4fs par %.4fs speedup %s", n_paths, scheme, t_seq, t_par,
                     format_speedup(row.speedup))
            rows.append(row)
    env = {"logical_cpus": os.cpu_count(), "n_steps": n_steps}
    return BenchReport(rows, repeats, getattr(backend, "name", repr(backend)), env)
