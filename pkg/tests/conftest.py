import math

import numpy as np
import pytest

from lmsky.geometry import SunPosition
from lmsky.sky import LMParams, SkyParams, SunParams
from lmsky.transport import ProbeScene, get_transport

ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion; returns the verdict."""
    lines = request.config.stash[ACCEPTANCE_KEY]

    def _record(number: int, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {detail}"
        lines.append((number, line))
        print(line)
        return ok
    return _record

@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("transport-cache")


@pytest.fixture(scope="session")
def scene():
    return ProbeScene()


@pytest.fixture(scope="session")
def T64(scene, cache_dir):
    """Standard transport: 64-texel-high panoramas, 64x64 probe."""
    return get_transport(scene, 64, cache_dir)


@pytest.fixture(scope="session")
def small_scene():
    return ProbeScene(render_size=32)


@pytest.fixture(scope="session")
def T16(small_scene, cache_dir):
    """Cheap transport for pipeline tests: 16x32 panoramas, 32x32 probe."""
    return get_transport(small_scene, 16, cache_dir)


@pytest.fixture
def sunny_params():
    return LMParams(
        SunPosition(math.radians(40.0), 2.0),
        SunParams((2.0e4, 1.9e4, 1.7e4), 120.0, 0.03),
        SkyParams((0.35, 0.4, 0.5), 3.0),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
