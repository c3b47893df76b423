"""Shared fixtures and the acceptance summary printed at the end of a run."""

import numpy as np
import pytest

from kgeft.grid import GridSpec

ACCEPTANCE = {}


def record(number, passed, detail):
    """Store one acceptance line and echo it for -s runs."""
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid1():
    return GridSpec(1, 128, 40.0)
