import os
import tempfile

import numpy as np
import pytest

from rosencit.nulldist import NullCache

_CACHE_DIR = tempfile.mkdtemp(prefix="rosencit-test-cache-")


def pytest_configure(config):
    # keep null tables out of the user's home cache
    os.environ.setdefault("ROSENCIT_CACHE_DIR", _CACHE_DIR)


@pytest.fixture(scope="session")
def cache():
    """One on-disk table cache shared by the whole session."""
    return NullCache(os.path.join(_CACHE_DIR, "shared"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
