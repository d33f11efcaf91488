"""Shared test helpers and the acceptance-criteria summary hook."""

import numpy as np
import pytest

ACCEPTANCE_RESULTS = []


def record_criterion(num: int, name: str, passed: bool, detail: str = ""):
    """Collect one acceptance-criterion outcome for the terminal summary."""
    ACCEPTANCE_RESULTS.append((num, name, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] criterion {num:2d}: {name}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def criterion():
    return record_criterion


def random_face_split_pair(rng, m, r):
    """Random factor pair whose face-splitting product has no zero rows."""
    W1 = rng.normal(size=(m, r))
    W2 = rng.normal(size=(m, r))
    return W1, W2
