"""Weighted shortest paths: graph balls and ball-to-ball distance matrices.

The search kernels are compiled with numba and release the GIL, so rows of a
distance matrix can be computed from a thread pool.
"""
from __future__ import annotations

import heapq
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .geometry import SurfaceKind, bolza_group, sphere_to_cartesian
from .graph import GeoGraph, WeightScheme

#: Slack on ball membership, matching the edge threshold slack.
RADIUS_TOL = 1e-12

_MAGIC = b"RGDM\x01\x00\x00\x00"


class UnreachableError(RuntimeError):
    def __init__(self, source: int, target: int):
        super().__init__(f"node {target} is unreachable from node {source}")
        self.source = source
        self.target = target


@numba.njit(cache=True, nogil=True)
def _search(indptr, indices, weights, source, limit, is_target, n_targets, h):
    """Best-first search keyed on ``g + h``; ``h = 0`` gives Dijkstra.

    Binary heap with lazy deletion. Stops when the heap empties, when the
    smallest key exceeds ``limit``, or once ``n_targets`` flagged nodes are
    settled (``n_targets <= 0`` disables that rule). Returns tentative
    distances, the settled mask and the number of expanded nodes.
    """
    n = len(indptr) - 1
    dist = np.full(n, np.inf)
    done = np.zeros(n, dtype=np.bool_)
    dist[source] = 0.0
    heap = [(h[source], source)]
    expanded = 0
    remaining = n_targets
    while heap:
        key, u = heapq.heappop(heap)
        if done[u]:
            continue
        if key > limit:
            break
        done[u] = True
        expanded += 1
        if is_target[u]:
            remaining -= 1
            if remaining == 0:
                break
        du = dist[u]
        for p in range(indptr[u], indptr[u + 1]):
            v = indices[p]
            if done[v]:
                continue
            nd = du + weights[p]
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd + h[v], v))
    return dist, done, expanded


@numba.njit(cache=True, nogil=True)
def _rows(indptr, indices, weights, sources, targets, h, out):
    n = len(indptr) - 1
    is_target = np.zeros(n, dtype=np.bool_)
    for t in targets:
        is_target[t] = True
    n_targets = 0
    for i in range(n):
        if is_target[i]:
            n_targets += 1
    expanded = 0
    for r in range(len(sources)):
        dist, done, e = _search(indptr, indices, weights, sources[r], np.inf, is_target, n_targets, h)
        expanded += e
        for c in range(len(targets)):
            t = targets[c]
            out[r, c] = dist[t] if done[t] else np.inf
    return expanded


# chart kinds understood by the compiled heuristic
_FLAT, _ROUND, _HYPERBOLIC = 0, 1, 2


@numba.njit(cache=True, nogil=True, inline="always")
def _geo(kind, a0, a1, a2, b0, b1, b2):
    if kind == _FLAT:
        du = abs(a0 - b0)
        du = 0.5 - abs(0.5 - du)
        dv = abs(a1 - b1)
        dv = 0.5 - abs(0.5 - dv)
        return math.sqrt(du * du + dv * dv)
    if kind == _ROUND:
        cx = a1 * b2 - a2 * b1
        cy = a2 * b0 - a0 * b2
        cz = a0 * b1 - a1 * b0
        return math.atan2(math.sqrt(cx * cx + cy * cy + cz * cz), a0 * b0 + a1 * b1 + a2 * b2)
    # Poincare disk: |z - w| / |1 - conj(z) w|
    nr = a0 - b0
    ni = a1 - b1
    dr = 1.0 - (a0 * b0 + a1 * b1)
    di = -(a0 * b1 - a1 * b0)
    ratio = math.sqrt((nr * nr + ni * ni) / (dr * dr + di * di))
    if ratio >= 1.0:
        return np.inf
    return 2.0 * math.atanh(ratio)


@numba.njit(cache=True, nogil=True)
def _geo_search(indptr, indices, weights, source, is_target, n_targets, kind, emb, timg, scale, hval):
    """A* with ``h(z) = scale * min_t d_M(z, t)`` over the rows of ``timg``, evaluated lazily.

    ``timg`` holds the embedded targets (every group image of each target on
    the hyperbolic chart). ``hval`` is scratch space filled with -1.
    """
    n = len(indptr) - 1
    dist = np.full(n, np.inf)
    done = np.zeros(n, dtype=np.bool_)
    touched = []
    dist[source] = 0.0
    heap = [(0.0, source)]
    expanded = 0
    remaining = n_targets
    while heap:
        key, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        expanded += 1
        if is_target[u]:
            remaining -= 1
            if remaining == 0:
                break
        du = dist[u]
        for p in range(indptr[u], indptr[u + 1]):
            v = indices[p]
            if done[v]:
                continue
            nd = du + weights[p]
            if nd < dist[v]:
                dist[v] = nd
                hv = hval[v]
                if hv < 0.0:
                    hv = np.inf
                    for t in range(timg.shape[0]):
                        d = _geo(kind, emb[v, 0], emb[v, 1], emb[v, 2], timg[t, 0], timg[t, 1], timg[t, 2])
                        if d < hv:
                            hv = d
                    hv *= scale
                    hval[v] = hv
                    touched.append(v)
                heapq.heappush(heap, (nd + hv, v))
    for v in touched:
        hval[v] = -1.0
    return dist, done, expanded


@numba.njit(cache=True, nogil=True)
def _partial_rows_geo(indptr, indices, weights, sources, tptr, tidx, tcol, cols, kind, emb, yimg, scale, known, out):
    n = len(indptr) - 1
    is_target = np.zeros(n, dtype=np.bool_)
    hval = np.full(n, -1.0)
    n_img = yimg.shape[1]
    expanded = 0
    for r in range(len(sources)):
        nt = tptr[r + 1] - tptr[r]
        timg = np.empty((nt * n_img, 3))
        for q in range(nt):
            is_target[tidx[tptr[r] + q]] = True
            c = tcol[tptr[r] + q]
            for g in range(n_img):
                for a in range(3):
                    timg[q * n_img + g, a] = yimg[c, g, a]
        dist, done, e = _geo_search(indptr, indices, weights, sources[r], is_target, nt, kind, emb, timg, scale, hval)
        expanded += e
        for p in range(tptr[r], tptr[r + 1]):
            is_target[tidx[p]] = False
        for c in range(len(cols)):
            if done[cols[c]]:
                known[r, c] = True
                out[r, c] = dist[cols[c]]
    return expanded


@dataclass(frozen=True)
class Ball:
    """Nodes within graph distance ``radius`` of ``center``, sorted by node index."""

    center: int
    radius: float
    nodes: np.ndarray
    dist: np.ndarray

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def members(self) -> dict[int, float]:
        return dict(zip(self.nodes.tolist(), self.dist.tolist()))


@dataclass(frozen=True)
class DistanceMatrix:
    values: np.ndarray
    row_nodes: np.ndarray
    col_nodes: np.ndarray
    expansions: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def dump(self, path) -> None:
        """Binary cache: magic, rows, cols, node indices, then row-major float64 values."""
        rows, cols = self.values.shape
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<QQ", rows, cols))
            fh.write(np.ascontiguousarray(self.row_nodes, dtype="<i8").tobytes())
            fh.write(np.ascontiguousarray(self.col_nodes, dtype="<i8").tobytes())
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "DistanceMatrix":
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:8] != _MAGIC:
            raise ValueError(f"{path}: not a distance-matrix dump")
        rows, cols = struct.unpack_from("<QQ", blob, 8)
        off = 24
        expected = off + 8 * (rows + cols + rows * cols)
        if len(blob) != expected:
            raise ValueError(f"{path}: truncated dump ({len(blob)} of {expected} bytes)")
        rn = np.frombuffer(blob, "<i8", rows, off)
        cn = np.frombuffer(blob, "<i8", cols, off + 8 * rows)
        vals = np.frombuffer(blob, "<f8", rows * cols, off + 8 * (rows + cols)).reshape(rows, cols)
        return cls(vals.copy(), rn.copy(), cn.copy())


def _arrays(graph: GeoGraph):
    return graph.indptr, graph.indices, graph.weights


def single_source(graph: GeoGraph, source: int, limit: float = math.inf):
    """Distances from ``source`` to every node (``inf`` where unreachable or beyond ``limit``)."""
    n = graph.num_nodes
    dist, done, _ = _search(*_arrays(graph), source, limit, np.zeros(n, np.bool_), 0, np.zeros(n))
    return np.where(done, dist, np.inf)


def ball(graph: GeoGraph, center: int, radius: float) -> Ball:
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if not 0 <= center < graph.num_nodes:
        raise IndexError(f"node {center} not in graph")
    n = graph.num_nodes
    dist, done, _ = _search(
        *_arrays(graph), center, radius + RADIUS_TOL, np.zeros(n, np.bool_), 0, np.zeros(n)
    )
    nodes = np.flatnonzero(done & (dist <= radius + RADIUS_TOL))
    return Ball(int(center), float(radius), nodes, dist[nodes])


def heuristic_scale(graph: GeoGraph) -> float:
    """Factor turning manifold length into a lower bound on path weight.

    Every edge of an RGG joins points at manifold distance at most
    ``epsilon`` (plus the edge slack), so a weight of ``epsilon`` or ``d_M``
    per edge dominates ``d_M`` and a unit weight dominates ``d_M / epsilon``.
    """
    if graph.surface is None or graph.coords is None:
        raise ValueError("A* needs an embedded graph")
    # edges may exceed epsilon by the threshold slack
    reach = graph.epsilon + 2 * RADIUS_TOL
    if graph.scheme is WeightScheme.UNIT:
        return 1.0 / reach
    if graph.scheme is WeightScheme.EPSILON:
        return graph.epsilon / reach
    return 1.0


def ball_heuristic(graph: GeoGraph, targets: np.ndarray, center: int) -> np.ndarray:
    """Lower bound on the graph distance from every node to the target set.

    ``s * max(0, d_M(z, center) - r)`` where ``r`` is the largest manifold
    distance from ``center`` to a target and ``s`` is :func:`heuristic_scale`.
    Consistent because every edge weight is at least ``s`` times the manifold
    distance of its endpoints.
    """
    scale = heuristic_scale(graph)
    c = graph.coords[center]
    dz = graph.surface.distance(graph.coords, c[None, :], validate=False)
    r = float(dz[targets].max()) if len(targets) else 0.0
    return scale * np.maximum(dz - r, 0.0)


def distance_matrix(
    graph: GeoGraph,
    ball_x: Ball,
    ball_y: Ball,
    method: str = "dijkstra",
    *,
    threads: int = 1,
    check: bool = True,
) -> DistanceMatrix:
    """Exact ``d_G`` between every member of ``ball_x`` and of ``ball_y`` in the full graph.

    ``method="astar"`` keys the search on ``g + h`` with :func:`ball_heuristic`
    towards ``ball_y`` and stops once every target is settled.
    """
    method = method.lower()
    sources = np.ascontiguousarray(ball_x.nodes, dtype=np.int64)
    targets = np.ascontiguousarray(ball_y.nodes, dtype=np.int64)
    if check:
        reach = single_source(graph, ball_x.center)
        bad = np.flatnonzero(~np.isfinite(reach[targets]))
        if bad.size:
            raise UnreachableError(ball_x.center, int(targets[bad[0]]))
    if method == "dijkstra":
        h = np.zeros(graph.num_nodes)
    elif method == "astar":
        h = ball_heuristic(graph, targets, ball_y.center)
    else:
        raise ValueError(f"unknown shortest-path method {method!r}")
    out = np.empty((len(sources), len(targets)))
    arrays = _arrays(graph)
    if threads <= 1 or len(sources) < 2:
        expanded = _rows(*arrays, sources, targets, h, out)
    else:
        chunks = np.array_split(np.arange(len(sources)), min(threads, len(sources)))
        bufs = [np.empty((len(c), len(targets))) for c in chunks]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = [
                pool.submit(_rows, *arrays, sources[c], targets, h, b) for c, b in zip(chunks, bufs)
            ]
            expanded = sum(f.result() for f in futs)
        for c, b in zip(chunks, bufs):
            out[c] = b
    if check and not np.all(np.isfinite(out)):
        r, c = np.argwhere(~np.isfinite(out))[0]
        raise UnreachableError(int(sources[r]), int(targets[c]))
    return DistanceMatrix(out, sources, targets, int(expanded))


def _flatten(lists):
    ptr = np.zeros(len(lists) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(w) for w in lists])
    flat = np.concatenate([np.asarray(w, dtype=np.int64) for w in lists]) if lists else np.empty(0, np.int64)
    return ptr, flat


def embedding(graph: GeoGraph) -> tuple[int, np.ndarray]:
    """Chart kind code and an ``(n, 3)`` embedding used by the compiled heuristic."""
    heuristic_scale(graph)
    kind = graph.surface.kind
    c = graph.coords
    if kind is SurfaceKind.TORUS:
        return _FLAT, np.column_stack([c, np.zeros(len(c))])
    if kind is SurfaceKind.SPHERE:
        return _ROUND, sphere_to_cartesian(c)
    return _HYPERBOLIC, np.column_stack([c, np.zeros(len(c))])


def _target_images(graph: GeoGraph, kind: int, emb: np.ndarray, cols: np.ndarray) -> np.ndarray:
    if kind != _HYPERBOLIC:
        return np.ascontiguousarray(emb[cols][:, None, :])
    z = graph.coords[cols, 0] + 1j * graph.coords[cols, 1]
    img = bolza_group().images(z).T  # (k, 49)
    return np.ascontiguousarray(np.stack([img.real, img.imag, np.zeros(img.shape)], axis=-1))


def partial_distance_rows(graph: GeoGraph, sources, wanted: list[np.ndarray], cols, *, threads: int = 1):
    """Exact ``d_G`` from each source to at least the columns it asks for.

    ``wanted[r]`` lists positions in ``cols`` needed for source ``r``. Each
    search is A* towards the nearest wanted target in manifold distance, and
    every node of ``cols`` settled on the way is reported too, since its
    distance is final. Returns ``(known, values, expansions)`` of shape
    ``(len(sources), len(cols))``.
    """
    sources = np.ascontiguousarray(sources, dtype=np.int64)
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    known = np.zeros((len(sources), len(cols)), dtype=np.bool_)
    out = np.full((len(sources), len(cols)), np.inf)
    if len(sources) == 0:
        return known, out, 0
    kind, emb = embedding(graph)
    yimg = _target_images(graph, kind, emb, cols)
    scale = heuristic_scale(graph)
    arrays = _arrays(graph)

    def run(idx, kb, ob):
        tptr, tcol = _flatten([wanted[i] for i in idx])
        return _partial_rows_geo(
            *arrays, sources[idx], tptr, cols[tcol], tcol, cols, kind, emb, yimg, scale, kb, ob
        )

    if threads <= 1 or len(sources) < 2:
        expanded = run(np.arange(len(sources)), known, out)
        return known, out, int(expanded)
    chunks = np.array_split(np.arange(len(sources)), min(threads, len(sources)))
    bufs = [(np.zeros((len(c), len(cols)), np.bool_), np.full((len(c), len(cols)), np.inf)) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futs = [pool.submit(run, c, kb, ob) for c, (kb, ob) in zip(chunks, bufs)]
        expanded = sum(f.result() for f in futs)
    for c, (kb, ob) in zip(chunks, bufs):
        known[c] = kb
        out[c] = ob
    return known, out, int(expanded)


def shortest_path(graph: GeoGraph, source: int, target: int, method: str = "dijkstra") -> tuple[float, int]:
    """Single-pair distance and the number of expanded nodes.

    The A* variant uses the per-pair heuristic ``h(z) = d_M(z, target)``.
    """
    n = graph.num_nodes
    if method == "dijkstra":
        h = np.zeros(n)
    elif method == "astar":
        scale = heuristic_scale(graph)
        h = scale * graph.surface.distance(graph.coords, graph.coords[target][None, :], validate=False)
    else:
        raise ValueError(f"unknown shortest-path method {method!r}")
    mask = np.zeros(n, np.bool_)
    mask[target] = True
    dist, done, expanded = _search(*_arrays(graph), source, np.inf, mask, 1, h)
    return (float(dist[target]) if done[target] else math.inf), int(expanded)


@dataclass(frozen=True)
class StretchSummary:
    min_ratio: float
    mean_ratio: float
    max_ratio: float
    pairs: int
    skipped: int
    violations: int
    ratios: np.ndarray


def stretch_stats(
    graph: GeoGraph,
    pair_sample_size: int,
    rng: np.random.Generator | int | None = None,
    *,
    dm_range: tuple[float, float] | None = None,
    num_sources: int | None = None,
) -> StretchSummary:
    """Ratios ``d_G / d_M`` over randomly sampled node pairs.

    Pairs share sources: ``num_sources`` full Dijkstra runs (default about the
    square root of the sample size) each contribute random targets, optionally
    restricted to ``d_M`` within ``dm_range``. ``violations`` counts pairs with
    ``d_G < d_M``.
    """
    if graph.surface is None:
        raise ValueError("stretch needs an embedded graph")
    if graph.scheme is WeightScheme.UNIT:
        raise ValueError("stretch is defined for distance or epsilon weights")
    rng = np.random.default_rng(rng)
    n = graph.num_nodes
    if num_sources is None:
        num_sources = max(1, int(math.ceil(math.sqrt(pair_sample_size))))
    num_sources = min(num_sources, n)
    per_source = int(math.ceil(pair_sample_size / num_sources))
    sources = rng.choice(n, size=num_sources, replace=False)
    ratios, skipped, taken, violations = [], 0, 0, 0
    for s in sources:
        if taken >= pair_sample_size:
            break
        dg = single_source(graph, int(s))
        dm = graph.surface.distance(graph.coords, graph.coords[s][None, :], validate=False)
        cand = np.flatnonzero(np.arange(n) != s)
        if dm_range is not None:
            lo, hi = dm_range
            cand = cand[(dm[cand] >= lo) & (dm[cand] <= hi)]
        if cand.size == 0:
            continue
        k = min(per_source, pair_sample_size - taken)
        pick = rng.choice(cand, size=k, replace=cand.size < k)
        taken += k
        ok = np.isfinite(dg[pick])
        skipped += int((~ok).sum())
        pick = pick[ok]
        violations += int((dg[pick] < dm[pick]).sum())
        ratios.append(dg[pick] / dm[pick])
    r = np.concatenate(ratios) if ratios else np.empty(0)
    if r.size == 0:
        return StretchSummary(math.nan, math.nan, math.nan, 0, skipped, 0, r)
    return StretchSummary(
        float(r.min()), float(r.mean()), float(r.max()), int(r.size), skipped, violations, r
    )
