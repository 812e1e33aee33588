import numpy as np
import pytest

from roadsense.features import feature_matrix, labeled_windows
from roadsense.ingest import SampleStream
from roadsense.simulator import SimConfig, default_profile, simulate
from roadsense.svm import train

FIXTURE_SEED = 7


def make_stream(az, rate=50.0, acc_xy=0.0, gyro=0.0, flag=None):
    """Stream with given vertical acceleration and constant other channels."""
    az = np.asarray(az, dtype=float)
    n = az.size
    acc = np.column_stack([np.full(n, acc_xy), np.full(n, acc_xy), az])
    g = np.full((n, 3), gyro, dtype=float)
    f = np.zeros(n, dtype=bool) if flag is None else np.asarray(flag, dtype=bool)
    return SampleStream(np.arange(n) / rate, acc, g, f, rate)


@pytest.fixture(scope="session")
def fixture_profile():
    return default_profile(26, 2000.0, seed=FIXTURE_SEED, noise_sigma=0.3)


@pytest.fixture(scope="session")
def fixture_stream(fixture_profile):
    return simulate(fixture_profile, SimConfig(speed=10.0, seed=FIXTURE_SEED))


@pytest.fixture(scope="session")
def fixture_model(fixture_stream):
    X, y = feature_matrix(labeled_windows(fixture_stream))
    return train(X, y)


ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Store and print one acceptance line, then fail the test if needed."""
    ACCEPTANCE_RESULTS[criterion] = (ok, detail)
    print(f"ACCEPTANCE {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"{k:2d}. {'PASS' if ok else 'FAIL'}  {detail}")
