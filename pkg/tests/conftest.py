import sys
from pathlib import Path

import numpy as np
import pytest

from drocal.model import OSC2
from drocal.summary import default_spec, summarize_batch

ECHO = Path(__file__).with_name("echo_sim.py")


@pytest.fixture
def echo_cmd():
    def make(mode):
        return [sys.executable, str(ECHO), mode]
    return make


@pytest.fixture(scope="session")
def spec12():
    return default_spec(128, 0.1)


@pytest.fixture(scope="session")
def osc2_data(spec12):
    """Summaries of 50 ground-truth trajectories."""
    a = OSC2.sample_truth(50, 11)
    return summarize_batch(OSC2.simulate_batch(a, OSC2.truth.e_true), OSC2.dt, spec12)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record and print one PASS/FAIL line, then assert."""
    def report(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
