from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"


def random_dataset(rng, n=None, d=None, ties=False):
    from ldofkit import Dataset

    n = int(rng.integers(3, 200)) if n is None else n
    d = int(rng.integers(1, 6)) if d is None else d
    X = rng.normal(size=(n, d))
    if ties:
        # Integer grid values create many equal distances and some duplicates.
        X = rng.integers(0, 4, size=(n, d)).astype(float)
    return Dataset(X)


@pytest.fixture
def scene():
    from ldofkit import generate_scene, default_scene

    return generate_scene(default_scene())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance verdicts, one line per criterion, echoed in the terminal summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
