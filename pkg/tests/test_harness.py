import csv
import io
import math

import pytest

from sevenleague.harness import (
    BenchReport,
    BenchRow,
    convergence_study,
    format_speedup,
    speedup,
    speedup_bench,
    steps_for_dt,
    strong_error,
    weak_error,
    write_error_csv,
)
from sevenleague.models import ModelParams, SdeModel, ou_conditional_moments, ou_exact_collocation, ou_model
from sevenleague.runtime import PoolBackend
from sevenleague.scheme import CollocationPredictor, ExactOuPredictor, SchemeConfig, simulate_7l
from sevenleague.simulate import euler_paths

THETA = ModelParams(0.0, 1.0, 0.5)


class ShiftedPredictor(CollocationPredictor):
    def _predict(self, states, dt, theta, backend=None):
        return ou_exact_collocation(states, dt, theta, self.grid) + 0.05


def test_strong_error_deterministic(grid5):
    theta = ModelParams(0.0, 1.0, 0.0)
    paths = simulate_7l(ou_model(1.0), theta, ExactOuPredictor(grid5), SchemeConfig(T=2, n_steps=4, n_paths=100))
    assert strong_error(paths, theta) < 1e-12
    assert weak_error(paths, theta) < 1e-12


@pytest.mark.parametrize("dt", [0.25, 1.0, 2.0])
def test_strong_error_exact_predictor(grid5, dt):
    cfg = SchemeConfig(T=2.0, n_steps=steps_for_dt(2.0, dt), n_paths=2000, seed=1)
    paths = simulate_7l(ou_model(1.0), THETA, ExactOuPredictor(grid5), cfg)
    assert strong_error(paths, THETA) < 1e-9


def test_strong_error_euler_first_order():
    coarse = euler_paths(ou_model(1.0), THETA, 2.0, 2, 10_000, seed=3)
    fine = euler_paths(ou_model(1.0), THETA, 2.0, 16, 10_000, seed=3)
    assert strong_error(coarse, THETA) / strong_error(fine, THETA) >= 4


def test_strong_error_rejects_non_ou():
    model = SdeModel(lambda t, y, th: -y, lambda t, y, th: 0.1 * y, 1.0)
    paths = euler_paths(model, THETA, 1.0, 2, 10, seed=0)
    with pytest.raises(ValueError):
        strong_error(paths, THETA)
    with pytest.raises(ValueError):
        weak_error(paths, THETA)


def test_weak_error_clt(grid5):
    n = 100_000
    paths = simulate_7l(ou_model(1.0), THETA, ExactOuPredictor(grid5), SchemeConfig(T=2, n_steps=4, n_paths=n, seed=2))
    sd = ou_conditional_moments(1.0, 2.0, THETA).std
    assert weak_error(paths, THETA) < 4 * sd / math.sqrt(n)


def test_weak_error_detects_shift(grid5):
    cfg = SchemeConfig(T=2.0, n_steps=4, n_paths=20_000, seed=2)
    paths = simulate_7l(ou_model(1.0), THETA, ShiftedPredictor(grid5), cfg)
    # shift c per step, decayed by exp(-lambda dt) per later step
    bias = 0.05 * sum(math.exp(-0.5 * k) for k in range(4))
    assert weak_error(paths, THETA) == pytest.approx(bias, abs=0.01)


def test_steps_for_dt():
    assert steps_for_dt(2.0, 0.25) == 8
    with pytest.raises(ValueError):
        steps_for_dt(2.0, 0.3)


def test_convergence_study_shapes_and_csv(grid5):
    dts = [0.25, 0.5, 1.0, 2.0]
    reports = convergence_study(dts, ["7l", "euler"], THETA, n_paths=2000, seed=5)
    assert [(r.scheme, r.dt) for r in reports] == [(s, d) for s in ("7l", "euler") for d in dts]
    exact = [r.strong_error for r in reports if r.scheme == "7l"]
    euler = [r.strong_error for r in reports if r.scheme == "euler"]
    assert max(exact) < 1e-9
    assert all(a < b for a, b in zip(euler, euler[1:]))
    buf = io.StringIO()
    write_error_csv(reports, buf)
    rows = list(csv.DictReader(io.StringIO(buf.getvalue())))
    assert list(rows[0]) == ["dt", "scheme", "strong_error", "weak_error", "n_paths"]
    for r, row in zip(reports, rows):
        assert float(row["strong_error"]) == r.strong_error and float(row["dt"]) == r.dt


@pytest.mark.parametrize("seq, par, shown", [
    # published benchmark rows: 7L then 7L-CDC
    (1.555, 0.268, "5.8"), (70.108, 6.844, "10.2"), (134.745, 14.623, "9.2"), (282.456, 21.545, "13.1"),
    (1.296, 0.062, "20.9"), (64.731, 2.828, "22.9"), (132.198, 5.886, "22.5"), (251.684, 11.527, "21.8"),
])
def test_speedup_table_rows(seq, par, shown):
    assert format_speedup(speedup(seq, par)) == shown


def test_speedup_rejects_zero():
    with pytest.raises(ValueError):
        speedup(1.0, 0.0)


def test_bench_report_csv_round_trip():
    report = BenchReport([BenchRow(1000, "7l", 0.1234567890123456789, 0.0311), BenchRow(50_000, "7l", 2.5, 1.0 / 3)],
                         repeats=3, backend="pool:4")
    rows = list(csv.DictReader(io.StringIO(report.to_csv())))
    for r, row in zip(report.rows, rows):
        assert float(row["sequential_seconds"]) == r.sequential_seconds
        assert float(row["parallel_seconds"]) == r.parallel_seconds
        assert float(row["speedup"]) == float(row["sequential_seconds"]) / float(row["parallel_seconds"])
    assert "pool:4" in report.format_table()


def test_speedup_bench_single_worker_sanity():
    report = speedup_bench([10_000], ["7l"], THETA, backend=PoolBackend(1), repeats=3)
    (row,) = report.rows
    assert 0.5 <= row.speedup <= 1.5


def test_speedup_bench_shape():
    report = speedup_bench([500, 1000], ["7l", "7l-cdc"], THETA, backend=PoolBackend(2), repeats=1)
    assert [(r.n_paths, r.scheme) for r in report.rows] == [(500, "7l"), (500, "7l-cdc"), (1000, "7l"), (1000, "7l-cdc")]
    for r in report.rows:
        assert r.speedup == r.sequential_seconds / r.parallel_seconds
