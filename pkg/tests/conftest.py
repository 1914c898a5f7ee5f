import numpy as np
import pytest

from risloc.config import resolve_scene
from risloc.scene import build_scene, schedule_for


@pytest.fixture(scope="session")
def desk_scene():
    """K=20, T=16 scene with noise switched off."""
    cfg = resolve_scene("desk", {"noise_power_sigma2": 0.0})
    return build_scene(cfg), schedule_for(cfg)


@pytest.fixture(scope="session")
def noisy_desk_scene():
    cfg = resolve_scene("desk")
    return build_scene(cfg), schedule_for(cfg)


@pytest.fixture(scope="session")
def default_scene():
    cfg = resolve_scene("z1")
    return build_scene(cfg), schedule_for(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
