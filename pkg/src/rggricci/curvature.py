"""Curvature estimators on graphs: mesoscopic and classic Ollivier, Forman."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Surface
from .graph import GeoGraph, ScalingSchedule, WeightScheme
from .paths import (
    RADIUS_TOL,
    Ball,
    UnreachableError,
    ball,
    distance_matrix,
    heuristic_scale,
    partial_distance_rows,
    shortest_path,
    _rows,
)
from .transport import NetworkSimplex, TransportProblem, TransportStatus, solve_emd


class IsolatedProbeError(UnreachableError):
    """Both probes sit in singleton balls and cannot reach each other."""


@dataclass(frozen=True)
class RicciTarget:
    value: float
    surface: str
    curvature: float
    dimension: int = 2


def ricci_target(surface: Surface | str) -> RicciTarget:
    """Limit of the rescaled curvature: ``Ric(v, v) / (2 (D + 2))``."""
    if not isinstance(surface, Surface):
        surface = Surface.of(surface)
    d = surface.dimension
    ric = surface.curvature * (d - 1)
    return RicciTarget(ric / (2 * (d + 2)), surface.name, surface.curvature, d)


@dataclass(frozen=True)
class CurvatureSample:
    kappa: float
    kappa_rescaled: float
    delta: float
    wasserstein: float
    ball_x_size: int
    ball_y_size: int
    n: int = 0
    seed: int = 0
    scheme: str = ""
    surface: str = ""
    alpha: float = math.nan
    beta: float = math.nan
    c_eps: float = math.nan
    c_delta: float = math.nan
    stats: dict = field(default_factory=dict, compare=False)


# --- exact W between balls ---------------------------------------------------


def _lazy_ok(graph: GeoGraph) -> bool:
    return graph.surface is not None and graph.coords is not None


def _initial_costs(graph: GeoGraph, bx: Ball, by: Ball):
    """Exact costs where cheap (equal nodes, edges) and a lower bound elsewhere.

    For adjacent nodes the edge itself is a shortest path: in every scheme the
    edge weight is a lower bound on the weight of any path between its ends.
    """
    X, Y = bx.nodes, by.nodes
    surf = graph.surface
    dm = surf.distance(graph.coords[X][:, None, :], graph.coords[Y][None, :, :], validate=False)
    scale = heuristic_scale(graph)
    lower = scale * dm
    if graph.scheme is not WeightScheme.DISTANCE:
        step = 1.0 if graph.scheme is WeightScheme.UNIT else graph.epsilon
        reach = graph.epsilon + 2 * RADIUS_TOL
        # non-adjacent distinct nodes are at least two hops apart
        hops = np.maximum(2.0, np.ceil(dm / reach))
        lower = np.maximum(lower, step * hops)
    known = np.zeros(dm.shape, dtype=bool)
    exact = np.zeros(dm.shape)
    pos = np.full(graph.num_nodes, -1, dtype=np.int64)
    pos[Y] = np.arange(len(Y))
    for i, s in enumerate(X):
        j = pos[s]
        if j >= 0:
            known[i, j] = True
        lo, hi = graph.indptr[s], graph.indptr[s + 1]
        cols = pos[graph.indices[lo:hi]]
        hit = cols >= 0
        known[i, cols[hit]] = True
        exact[i, cols[hit]] = graph.weights[lo:hi][hit]
    cost = np.where(known, exact, lower)
    return cost, known


def lazy_wasserstein(graph: GeoGraph, bx: Ball, by: Ball, *, threads: int = 1, max_rounds: int = 10_000):
    """Exact W between uniform measures on two balls, computing only the graph distances it needs.

    Unknown costs start at a lower bound ``L <= d_G``. After each transport
    solve, the unknown entries carrying mass are replaced by exact distances
    and the solve resumes from the previous basis. Once the plan is supported
    on exact entries it is optimal for the true costs too: its value equals
    the optimum of a problem whose costs are everywhere no larger.

    Returns ``(W, stats)``.
    """
    cost, known = _initial_costs(graph, bx, by)
    m, k = cost.shape
    Y = by.nodes
    ns = NetworkSimplex(np.full(m, float(k)), np.full(k, float(m)))
    rounds = searches = expansions = 0
    while True:
        rounds += 1
        if rounds > max_rounds:
            raise RuntimeError("lazy transport did not settle")
        flow, pot, status = ns.solve(cost)
        if status != 0:
            raise RuntimeError(f"network simplex failed (status {status})")
        need = (flow > 0) & ~known
        rows = np.flatnonzero(need.any(axis=1))
        if rows.size == 0:
            break
        wanted = [np.flatnonzero(need[i]) for i in rows]
        kn, vals, e = partial_distance_rows(graph, bx.nodes[rows], wanted, Y, threads=threads)
        if not np.all(kn[need[rows]]) or not np.all(np.isfinite(vals[kn])):
            r, c = np.argwhere(need[rows] & ~(kn & np.isfinite(vals)))[0]
            raise UnreachableError(int(bx.nodes[rows[r]]), int(Y[c]))
        sub_cost = cost[rows]
        sub_known = known[rows]
        fresh = kn & ~sub_known
        sub_cost[fresh] = vals[fresh]
        sub_known |= fresh
        cost[rows] = sub_cost
        known[rows] = sub_known
        searches += rows.size
        expansions += e
    w = float(np.sum(flow * cost)) / (m * k)
    stats = {
        "rounds": rounds,
        "searches": searches,
        "expansions": expansions,
        "pivots": ns.pivots,
        "known_fraction": float(known.mean()),
    }
    return w, stats


def full_wasserstein(graph: GeoGraph, bx: Ball, by: Ball, *, method: str = "dijkstra", threads: int = 1):
    """W from the complete ball-to-ball distance matrix. Returns ``(W, stats)``."""
    dm = distance_matrix(graph, bx, by, method, threads=threads, check=False)
    if not np.all(np.isfinite(dm.values)):
        r, c = np.argwhere(~np.isfinite(dm.values))[0]
        raise UnreachableError(int(bx.nodes[r]), int(by.nodes[c]))
    sol = solve_emd(TransportProblem.uniform(dm.values))
    if sol.status is not TransportStatus.OPTIMAL:
        raise RuntimeError("transport solver failed on a balanced problem")
    return sol.value, {"expansions": dm.expansions, "pivots": sol.pivots}


# --- estimators --------------------------------------------------------------


def ollivier_mesoscopic(
    graph: GeoGraph,
    x: int,
    y: int,
    delta: float,
    *,
    method: str = "auto",
    threads: int = 1,
    schedule: ScalingSchedule | None = None,
) -> CurvatureSample:
    """``kappa = 1 - W(mu_x, mu_y) / delta`` with ``mu`` uniform on the graph balls of radius ``delta``.

    Balls contain their centers. ``method`` is ``"lazy"`` (needs an embedded
    graph), ``"full"`` (Dijkstra distance matrix), ``"astar"`` (A* distance
    matrix) or ``"auto"`` (lazy when possible).
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    n = graph.num_nodes
    for v in (x, y):
        if not 0 <= v < n:
            raise IndexError(f"node {v} not in graph")
    method = method.lower()
    if method == "auto":
        method = "lazy" if _lazy_ok(graph) else "full"
    bx = ball(graph, x, delta)
    by = ball(graph, y, delta)
    if x != y:
        embedded = _lazy_ok(graph)
        d_xy, _ = shortest_path(graph, x, y, "astar" if embedded else "dijkstra")
        if not math.isfinite(d_xy):
            if len(bx) == 1 or len(by) == 1:
                raise IsolatedProbeError(x, y)
            raise UnreachableError(x, y)
    if x == y:
        w, stats = 0.0, {}
    elif method == "lazy":
        if not _lazy_ok(graph):
            raise ValueError("the lazy route needs an embedded graph")
        w, stats = lazy_wasserstein(graph, bx, by, threads=threads)
    elif method == "full":
        w, stats = full_wasserstein(graph, bx, by, threads=threads)
    elif method == "astar":
        w, stats = full_wasserstein(graph, bx, by, method="astar", threads=threads)
    else:
        raise ValueError(f"unknown method {method!r}")
    kappa = 1.0 - w / delta
    prov = {}
    if schedule is not None:
        prov = dict(alpha=schedule.alpha, beta=schedule.beta, c_eps=schedule.c_eps, c_delta=schedule.c_delta)
    return CurvatureSample(
        kappa=kappa,
        kappa_rescaled=kappa / delta**2,
        delta=float(delta),
        wasserstein=w,
        ball_x_size=len(bx),
        ball_y_size=len(by),
        n=n,
        seed=graph.seed,
        scheme=graph.scheme.value,
        surface=graph.surface.name if graph.surface is not None else "",
        stats=stats,
        **prov,
    )


def ollivier_classic(graph: GeoGraph, x: int, y: int) -> float:
    """One-step curvature of an edge with uniform, non-lazy neighbour measures and hop distances."""
    if graph.scheme is not WeightScheme.UNIT:
        raise ValueError("classic curvature is defined on unweighted graphs")
    if x == y or not graph.has_edge(x, y):
        raise ValueError(f"nodes {x} and {y} are not adjacent")
    nx = np.asarray(graph.neighbors(x), dtype=np.int64)
    ny = np.asarray(graph.neighbors(y), dtype=np.int64)
    hops = np.empty((len(nx), len(ny)))
    _rows(graph.indptr, graph.indices, np.ones_like(graph.weights), nx, ny, np.zeros(graph.num_nodes), hops)
    sol = solve_emd(TransportProblem.uniform(hops))
    return 1.0 - sol.value


class FormanOrder(str, enum.Enum):
    F1 = "F1"
    F2 = "F2"


def forman(graph: GeoGraph, i: int, j: int, order: FormanOrder | str = FormanOrder.F1) -> int:
    """``F1 = 4 - k_i - k_j``; ``F2`` adds three per triangle on the edge."""
    order = FormanOrder(str(order.value if isinstance(order, FormanOrder) else order).upper())
    if i == j or not graph.has_edge(i, j):
        raise ValueError(f"no edge between {i} and {j}")
    f1 = 4 - int(graph.degree(i)) - int(graph.degree(j))
    if order is FormanOrder.F1:
        return f1
    tri = np.intersect1d(graph.neighbors(i), graph.neighbors(j), assume_unique=True).size
    return f1 + 3 * int(tri)
