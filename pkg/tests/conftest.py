import os
import sys

import numpy as np
import pytest
from hypothesis import settings

from qergo.ensembles import EnsembleConfig, perturbed_regular, sample_potential
from qergo.graph import complete_graph, petersen_graph

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")


@pytest.fixture(scope="session")
def k4():
    return complete_graph(4)


@pytest.fixture(scope="session")
def petersen():
    return petersen_graph()


def mixed_instance(n, seed, epsilon=1.0, extra=None):
    """Mixed-degree graph (degrees 3..6) with a uniform potential of bound ``epsilon``."""
    cfg = EnsembleConfig(n, 3, epsilon, "uniform", (), seed)
    g = perturbed_regular(cfg, n // 4 if extra is None else extra, 6)
    return g, sample_potential(g, cfg).values


@pytest.fixture(scope="session")
def small_instance():
    return mixed_instance(12, 1)


@pytest.fixture(scope="session")
def medium_instance():
    return mixed_instance(60, 7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
