import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lpsopt.spectral import WavenumberGrid, from_function, random_solenoidal

settings.register_profile(
    "default", max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def grid16():
    return WavenumberGrid(16)


@pytest.fixture(scope="session")
def grid8():
    return WavenumberGrid(8)


def shear(grid, a=1.0):
    """``(a sin 2 pi y, 0, 0)``."""
    return from_function(grid, lambda x, y, z: (a * np.sin(2 * np.pi * y), 0.0, 0.0))


def taylor_green(grid):
    def fn(x, y, z):
        return (
            np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y),
            -np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y),
            0.0,
        )

    return from_function(grid, fn)


def random_field(grid, seed, scale=1.0, k0=2.0):
    return random_solenoidal(grid, np.random.default_rng(seed), k0) * scale


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Records one PASS/FAIL line per acceptance criterion for the terminal summary."""
    lines = request.config.stash[ACCEPTANCE]

    def record(criterion: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].split(".")[0])):
            terminalreporter.write_line(line)
