import sys
from pathlib import Path

import numpy as np
import pytest

from oseen_phs.mesh import Mesh, build_channel_mesh

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def channel():
    """[0, 2] x [0, 1] channel with 4 x 2 cells."""
    return build_channel_mesh(2.0, 1.0, 4, 2)


@pytest.fixture
def unit_square():
    return build_channel_mesh(1.0, 1.0, 4, 4)


@pytest.fixture
def distorted_channel():
    """Channel with interior vertices moved off the lattice."""
    m = build_channel_mesh(2.0, 1.0, 3, 3)
    rng = np.random.default_rng(3)
    nodes = m.nodes.copy()
    interior = (nodes[:, 0] > 1e-12) & (nodes[:, 0] < 2 - 1e-12) & \
               (nodes[:, 1] > 1e-12) & (nodes[:, 1] < 1 - 1e-12)
    nodes[interior] += rng.uniform(-0.08, 0.08, size=(interior.sum(), 2))
    return Mesh(nodes, m.triangles, m.boundary_edges, m.boundary_tags)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
