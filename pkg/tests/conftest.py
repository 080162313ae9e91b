import numpy as np
import pytest

from helpers import ACCEPTANCE_ROWS
from ramp.dataio import LabeledSample, SampleSet


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_ROWS:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail in sorted(ACCEPTANCE_ROWS, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:>2}. {title}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_set():
    """Six utterances from two systems with 2-d embeddings."""
    rows = [
        ("a1", "A", [0.0, 0.0], 2.0),
        ("a2", "A", [0.1, 0.0], 3.0),
        ("a3", "A", [0.0, 0.2], 4.0),
        ("b1", "B", [1.0, 1.0], 1.0),
        ("b2", "B", [1.1, 0.9], 2.5),
        ("b3", "B", [0.9, 1.2], 4.5),
    ]
    return SampleSet([LabeledSample(i, s, np.array(e), m) for i, s, e, m in rows], 2)
