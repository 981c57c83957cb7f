import numpy as np
import pytest

from sevenleague.collocation import gauss_hermite_grid
from sevenleague.models import ModelParams

ACCEPTANCE_LINES = []


@pytest.fixture
def grid5():
    return gauss_hermite_grid(5)


@pytest.fixture
def ou_theta():
    return ModelParams(mean_level=0.0, reversion_speed=1.0, volatility=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20201007)


@pytest.fixture
def criterion():
    """Record a one-line pass/fail verdict for the acceptance summary."""

    def record(number, ok, detail):
        verdict = "NOT EVALUATED" if ok is None else ("PASS" if ok else "FAIL")
        ACCEPTANCE_LINES.append(f"criterion {number}: {verdict}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def trained_ou():
    """Network trained on the default OU feature box (10^5 rows, 200 epochs max)."""
    import time

    from sevenleague.ann import TrainConfig, train
    from sevenleague.simulate import generate_training_set

    grid = gauss_hermite_grid(5)
    data = generate_training_set(100_000, grid, labels="exact", seed=1)
    t0 = time.perf_counter()
    result = train(data, TrainConfig(epochs=200, batch_size=1024, lr=1e-3, seed=0))
    result.train_seconds = time.perf_counter() - t0
    result.data = data
    return result
