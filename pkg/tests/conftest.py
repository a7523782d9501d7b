import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qedqaoa.graph import SSSP, Commodity, ProblemInstance, build_grid, build_triangle_chain

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def corner_instance(net, kind=SSSP, weights=None):
    s, t = net.meta.get("source_corner", 0), net.meta.get("sink_corner", net.n_vertices - 1)
    if weights is not None:
        net = type(net)(
            net.n_vertices, net.edges, weights=weights, faces=[f.vertices for f in net.faces], name=net.name, meta=net.meta
        )
    return ProblemInstance(net, (Commodity(s, t),), kind)


@pytest.fixture
def tri2():
    return corner_instance(build_triangle_chain(2))


@pytest.fixture
def grid3():
    return build_grid(3, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
