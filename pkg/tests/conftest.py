import numpy as np
import pytest

from fraclt.fbm import FbmPath, simulate_fbm

#: Lines collected by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(criterion: str, passed: bool, detail: str) -> str:
    line = f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} -- {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def line_path():
    """Injected X_s = s - 1/2 on [0, 1] at n = 10^4."""
    return FbmPath.from_function(lambda t: t - 0.5, n=10_000, horizon=1.0, hurst=0.5)


@pytest.fixture(scope="session")
def bm_path():
    return simulate_fbm(4096, 0.5, seed=2024, oversample=4)


@pytest.fixture(scope="session")
def rough_path():
    return simulate_fbm(1024, 0.3, seed=99, oversample=16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
