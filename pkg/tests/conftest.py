import numpy as np
import pytest

from qpo.fingerprints import CandidatePool, CountFingerprint

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_fingerprints(rng, n, dim=64, max_bits=12, max_count=5):
    out = []
    for _ in range(n):
        k = int(rng.integers(1, max_bits + 1))
        idx = np.sort(rng.choice(dim, size=k, replace=False))
        out.append(CountFingerprint(idx, rng.integers(1, max_count + 1, size=k), dim))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_pool(rng):
    fps = random_fingerprints(rng, 40, dim=32)
    y = rng.standard_normal(40)
    return CandidatePool(fps, 32, [f"m{i}" for i in range(40)], y)
