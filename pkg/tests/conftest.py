import itertools

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


def brute_points(d):
    """All of {-1,+1}^d via itertools, independent of the package's enumeration."""
    return np.array(list(itertools.product([-1.0, 1.0], repeat=d)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS: dict = {}


@pytest.fixture
def verdict():
    """Record one acceptance line: verdict(number, passed, detail)."""

    def record(number: int, passed: bool, detail: str) -> None:
        _VERDICTS[number] = (passed, detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        passed, detail = _VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
