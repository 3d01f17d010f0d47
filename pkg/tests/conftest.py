import numpy as np
import pytest

from rggricci.geometry import Surface, probe_pair
from rggricci.graph import GeoGraph, build_rgg
from rggricci.sampling import SamplerConfig, sample_points

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def small_rgg(surface="torus", n=300, eps=0.15, scheme="distance", seed=0, delta=None):
    surf = Surface.of(surface)
    pts = sample_points(surf, SamplerConfig(n, seed=seed))
    probes = probe_pair(surf, delta if delta is not None else eps)
    return build_rgg(surf, pts, probes, eps, scheme, seed=seed)


def random_weighted_graph(rng, n, p, wmax=1.0):
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    edges = np.column_stack([iu[keep], ju[keep]])
    w = rng.uniform(0.01, wmax, len(edges))
    return GeoGraph.from_edges(n, edges, w, scheme="ManifoldDistance")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
