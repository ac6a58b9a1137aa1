import numpy as np
import pytest

from hybridem.mesh import Material
from hybridem.meshgen import Cylinder, generate_annulus_scene

F300 = 300e6
W300 = 2 * np.pi * F300


def circle_xy(n, radius=1.0, center=(0.0, 0.0), phase=0.0):
    t = phase + 2 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])


@pytest.fixture(scope="session")
def small_scene():
    """Dielectric cylinder r = 0.3 m in a 1.2 m domain, h = 0.04 m."""
    return generate_annulus_scene(Cylinder(0.3, Material(2.3)), 1.2, 0.04, far_h=0.04)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
