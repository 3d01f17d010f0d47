import io
import math

import numpy as np
import pytest

from conftest import small_rgg
from rggricci.geometry import Surface, probe_pair
from rggricci.graph import (
    DensityClass,
    EdgeListError,
    GeoGraph,
    ScalingSchedule,
    WeightScheme,
    build_rgg,
    check_regime,
    expected_degree,
    read_edge_list,
    threshold_pairs,
    write_edge_list,
)
from rggricci.sampling import SamplerConfig, sample_points

TORUS, SPHERE, BOLZA = Surface.of("torus"), Surface.of("sphere"), Surface.of("bolza")


def edge_set(g):
    u, v, w = g.edge_array()
    return {(a, b): c for a, b, c in zip(u.tolist(), v.tolist(), w.tolist())}


def test_single_edge_weights():
    pts = [[0.3, 0.3], [0.35, 0.3]]
    g = build_rgg(TORUS, pts, None, 0.1, "distance")
    assert g.num_edges == 1 and g.edge_weight(0, 1) == pytest.approx(0.05, abs=1e-15)
    g = build_rgg(TORUS, pts, None, 0.1, "epsilon")
    assert g.edge_weight(0, 1) == 0.1
    g = build_rgg(TORUS, pts, None, 0.1, "unit")
    assert g.edge_weight(1, 0) == 1.0


def test_collinear_path_across_seam():
    pts = [[0.96, 0.5], [0.04, 0.5], [0.12, 0.5]]
    g = build_rgg(TORUS, pts, None, 0.1)
    assert set(edge_set(g)) == {(0, 1), (1, 2)}


def test_probes_are_last_nodes():
    pts = sample_points(SPHERE, SamplerConfig(50, seed=0))
    g = build_rgg(SPHERE, pts, probe_pair(SPHERE, 0.2), 0.3)
    x, y = g.probes
    assert (x, y) == (50, 51)
    assert SPHERE.distance(g.coords[x], g.coords[y]) == pytest.approx(0.2, abs=1e-12)


@pytest.mark.parametrize("surface,eps", [(TORUS, 0.05), (SPHERE, 0.15), (BOLZA, 0.25), (BOLZA, 0.9)], ids=str)
def test_tree_matches_brute_force(surface, eps):
    pts = sample_points(surface, SamplerConfig(1000, seed=7))
    pt, dt = threshold_pairs(surface, pts, eps, "tree")
    pb, db = threshold_pairs(surface, pts, eps, "brute")
    assert np.array_equal(pt, pb)
    assert np.array_equal(dt, db)


@pytest.mark.parametrize("scheme", list(WeightScheme))
def test_invariants(scheme):
    eps = 0.2
    g = small_rgg("bolza", 600, eps, scheme, seed=4)
    assert np.all(g.indices != np.repeat(np.arange(g.num_nodes), g.degree()))
    u, v, w = g.edge_array()
    for a, b in zip(u[:200], v[:200]):
        assert g.has_edge(b, a) and g.edge_weight(a, b) == g.edge_weight(b, a)
    dm = g.manifold_distance(u, v)
    assert np.all(dm <= eps + 1e-12)
    if scheme is WeightScheme.DISTANCE:
        assert np.all(w > 0) and np.all(w <= eps + 1e-12)
        assert np.allclose(w, dm, atol=1e-15, rtol=0)
    else:
        assert np.all(w == (eps if scheme is WeightScheme.EPSILON else 1.0))


def test_ordering_invariance():
    pts = sample_points(TORUS, SamplerConfig(800, seed=3))
    perm = np.random.default_rng(0).permutation(800)
    a = build_rgg(TORUS, pts, None, 0.06)
    b = build_rgg(TORUS, pts[perm], None, 0.06)
    relabelled = {tuple(sorted((int(perm[i]), int(perm[j])))): w for (i, j), w in edge_set(b).items()}
    assert relabelled == edge_set(a)


def test_expected_degree_examples():
    assert expected_degree(TORUS, 10_000, 0.03) == pytest.approx(10_000 * math.pi * 0.0009)
    assert expected_degree(TORUS, 10_000, 0.03) == pytest.approx(28.27, abs=5e-3)
    assert expected_degree(SPHERE, 500, math.pi) == pytest.approx(500)
    flat = math.pi * 1e-6
    for s in (SPHERE, BOLZA):
        assert expected_degree(s, 1, 1e-3) * s.volume / flat == pytest.approx(1, abs=1e-6)


@pytest.mark.parametrize("surface,n,eps", [(TORUS, 1000, 0.05), (SPHERE, 1000, 0.2), (BOLZA, 1000, 0.3)], ids=str)
def test_mean_degree_matches_expectation(surface, n, eps):
    # with probes omitted, the n points are iid so the expected degree is (n - 1) p
    means = []
    for seed in range(50):
        g = build_rgg(surface, sample_points(surface, SamplerConfig(n, seed=seed)), None, eps)
        means.append(g.degree().mean())
    means = np.array(means)
    expected = expected_degree(surface, n - 1, eps)
    se = means.std(ddof=1) / math.sqrt(len(means))
    assert abs(means.mean() - expected) <= 3 * se


def test_edge_list_roundtrip(tmp_path):
    g = small_rgg("bolza", 100, 0.5, seed=9)
    write_edge_list(g, tmp_path / "g.txt")
    back = read_edge_list(tmp_path / "g.txt")
    assert back.num_nodes == g.num_nodes
    assert edge_set(back) == edge_set(g)
    assert np.array_equal(back.coords, g.coords)
    assert (back.epsilon, back.scheme, back.seed, back.surface) == (g.epsilon, g.scheme, g.seed, g.surface)


def test_edge_list_stream_and_empty(tmp_path):
    g = build_rgg(TORUS, [[0.1, 0.1], [0.6, 0.6]], None, 0.1)
    buf = io.StringIO()
    write_edge_list(g, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].startswith("# surface=torus n=2 ") and lines[1] == "# nodes"
    (tmp_path / "e.txt").write_text(buf.getvalue())
    assert read_edge_list(tmp_path / "e.txt").num_edges == 0


def test_malformed_edge_line(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("# surface=none n=5 epsilon=1 scheme=Unit seed=0\n0 1 1\n3 x 0.5\n")
    with pytest.raises(EdgeListError, match="line 3"):
        read_edge_list(p)
    p.write_text("0 1 1\n")
    with pytest.raises(EdgeListError, match="header"):
        read_edge_list(p)
    with pytest.raises(FileNotFoundError):
        read_edge_list(tmp_path / "missing.txt")


def test_from_edges_validation():
    with pytest.raises(ValueError):
        GeoGraph.from_edges(3, [(0, 3)])
    with pytest.raises(ValueError):
        GeoGraph.from_edges(3, [(1, 1)])
    with pytest.raises(ValueError):
        build_rgg(TORUS, [[0.1, 0.1]], None, 0.0)


def test_schedule():
    s = ScalingSchedule(0.16, 0.16, n=2**13)
    assert s.epsilon == s.delta == pytest.approx(2 ** (-13 * 0.16))
    assert ScalingSchedule(0.5, 0.25, n=16).check().epsilon == 0.25
    with pytest.raises(ValueError):
        ScalingSchedule(0.25, 0.5, n=16).check()
    with pytest.raises(ValueError):
        ScalingSchedule(0.1, 0.1, c_eps=0)


def test_regime_examples():
    r = check_regime(ScalingSchedule(0.16, 0.16))
    assert r.weighted_equal_radii_ok and r.applicable_ok
    assert not check_regime(ScalingSchedule(0.5, 0.25)).weighted_ok
    assert not check_regime(ScalingSchedule(0.25, 0.25)).weighted_ok
    assert check_regime(ScalingSchedule(0.2, 0.05), WeightScheme.EPSILON).unweighted_ok
    assert check_regime(ScalingSchedule(0.0, 0.0)).density_class is DensityClass.DENSE
    assert check_regime(ScalingSchedule(0.5, 0.1)).density_class is DensityClass.ULTRASPARSE
    assert check_regime(ScalingSchedule(0.3, 0.1)).density_class is DensityClass.SPARSE
