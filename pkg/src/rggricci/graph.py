"""Random geometric graphs on the surfaces, scaling schedules and edge-list IO."""
from __future__ import annotations

import contextlib
import enum
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import DomainError, Surface, SurfaceKind, bolza_group, poincare_distance, sphere_to_cartesian

EDGE_TOL = 1e-12


class WeightScheme(str, enum.Enum):
    DISTANCE = "ManifoldDistance"
    EPSILON = "EpsilonConstant"
    UNIT = "Unit"

    @classmethod
    def parse(cls, value) -> "WeightScheme":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {
            "distance": cls.DISTANCE,
            "manifolddistance": cls.DISTANCE,
            "epsilon": cls.EPSILON,
            "epsilonconstant": cls.EPSILON,
            "eps": cls.EPSILON,
            "unit": cls.UNIT,
            "unweighted": cls.UNIT,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown weight scheme {value!r}") from None


@dataclass(frozen=True, eq=False)
class GeoGraph:
    """Undirected weighted graph in CSR form, optionally embedded in a surface.

    Neighbour lists are sorted by index. When built by :func:`build_rgg` with a
    probe pair, ``x`` and ``y`` are the last two nodes.
    """

    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    epsilon: float = 1.0
    scheme: WeightScheme = WeightScheme.UNIT
    surface: Surface | None = None
    coords: np.ndarray | None = None
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "scheme", WeightScheme.parse(self.scheme))
        for arr in (self.indptr, self.indices, self.weights, self.coords):
            if arr is not None:
                arr.setflags(write=False)

    @classmethod
    def from_edges(cls, num_nodes: int, edges, weights=None, **kwargs) -> "GeoGraph":
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if weights is None:
            weights = np.ones(len(edges))
        weights = np.asarray(weights, dtype=float)
        if np.any(edges < 0) or np.any(edges >= num_nodes):
            raise ValueError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self-loops are not allowed")
        indptr, indices, w = _to_csr(num_nodes, edges[:, 0], edges[:, 1], weights)
        return cls(indptr, indices, w, **kwargs)

    @property
    def num_nodes(self) -> int:
        return len(self.indptr) - 1

    @property
    def num_edges(self) -> int:
        return len(self.indices) // 2

    @property
    def probes(self) -> tuple[int, int]:
        return self.num_nodes - 2, self.num_nodes - 1

    def degree(self, i=None):
        deg = np.diff(self.indptr)
        return deg if i is None else int(deg[i])

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def neighbor_weights(self, i: int) -> np.ndarray:
        return self.weights[self.indptr[i] : self.indptr[i + 1]]

    def has_edge(self, i: int, j: int) -> bool:
        nb = self.neighbors(i)
        k = np.searchsorted(nb, j)
        return bool(k < len(nb) and nb[k] == j)

    def edge_weight(self, i: int, j: int) -> float:
        nb = self.neighbors(i)
        k = np.searchsorted(nb, j)
        if k == len(nb) or nb[k] != j:
            raise KeyError(f"no edge ({i}, {j})")
        return float(self.neighbor_weights(i)[k])

    def edge_array(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Edges with ``u < v`` in lexicographic order, and their weights."""
        rows = np.repeat(np.arange(self.num_nodes), np.diff(self.indptr))
        keep = rows < self.indices
        return rows[keep], self.indices[keep], self.weights[keep]

    def manifold_distance(self, i, j):
        if self.surface is None:
            raise ValueError("graph has no embedding")
        return self.surface.distance(self.coords[i], self.coords[j], validate=False)


def _to_csr(num_nodes, u, v, w):
    rows = np.concatenate([u, v])
    cols = np.concatenate([v, u])
    ww = np.concatenate([w, w])
    order = np.lexsort((cols, rows))
    rows, cols, ww = rows[order], cols[order], ww[order]
    if len(rows) > 1:
        dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
        if np.any(dup):
            raise ValueError("duplicate edge")
    indptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, cols.astype(np.int64), ww.astype(float)


# --- neighbour search ---------------------------------------------------------


def _candidate_pairs(surface: Surface, pts: np.ndarray, eps: float) -> np.ndarray:
    """Unordered index pairs (i < j) that contain every pair within ``eps``."""
    n = len(pts)
    slack = 1e-9
    if surface.kind is SurfaceKind.TORUS:
        if eps >= math.sqrt(0.5):
            return _all_pairs(n)
        tree = cKDTree(pts, boxsize=1.0)
        return tree.query_pairs(eps + slack, output_type="ndarray")
    if surface.kind is SurfaceKind.SPHERE:
        if eps >= math.pi:
            return _all_pairs(n)
        xyz = sphere_to_cartesian(pts)
        tree = cKDTree(xyz)
        return tree.query_pairs(2 * math.sin(eps / 2) + slack, output_type="ndarray")
    # A hyperbolic ball of radius eps about z is a Euclidean disk; with t = tanh(eps/2)
    # its centre sits at z (1 - t^2) / (1 - |z|^2 t^2) and its radius is
    # t (1 - |z|^2) / (1 - |z|^2 t^2). Query each point with the farthest reach of its disk.
    z = pts[:, 0] + 1j * pts[:, 1]
    images = bolza_group().images(z)  # (49, n)
    flat = images.ravel()
    img_xy = np.column_stack([flat.real, flat.imag])
    owner = np.tile(np.arange(n), 49)
    t = math.tanh(eps / 2)
    r2 = np.abs(z) ** 2
    denom = 1 - r2 * t * t
    reach = np.abs(z) * (1 - (1 - t * t) / denom) + t * (1 - r2) / denom + slack
    hits = cKDTree(img_xy).query_ball_point(pts, reach)
    lens = np.fromiter((len(h) for h in hits), dtype=np.int64, count=n)
    if lens.sum() == 0:
        return np.empty((0, 2), dtype=np.int64)
    i = np.repeat(np.arange(n), lens)
    k = np.concatenate([np.asarray(h, dtype=np.int64) for h in hits if h])
    j = owner[k]
    keep = i != j
    i, j, k = i[keep], j[keep], k[keep]
    # drop hits whose own image is clearly out of range; the exact check follows
    near = poincare_distance(z[i], flat[k]) <= eps + slack
    i, j = i[near], j[near]
    a, b = np.minimum(i, j), np.maximum(i, j)
    pairs = np.unique(a * n + b)
    return np.column_stack([pairs // n, pairs % n])


def _all_pairs(n):
    i, j = np.triu_indices(n, k=1)
    return np.column_stack([i, j]).astype(np.int64)


def _pair_distances(surface, pts, pairs, chunk=1 << 18):
    out = np.empty(len(pairs))
    for s in range(0, len(pairs), chunk):
        p = pairs[s : s + chunk]
        out[s : s + chunk] = surface.distance(pts[p[:, 0]], pts[p[:, 1]], validate=False)
    return out


def threshold_pairs(surface: Surface, pts, eps: float, method: str = "tree"):
    """All pairs ``i < j`` with ``d_M <= eps`` (plus 1e-12 slack) and their distances.

    ``method="brute"`` evaluates every pair and is the reference for ``"tree"``.
    """
    pts = np.asarray(pts, dtype=float)
    if method == "brute":
        pairs = _all_pairs(len(pts))
    elif method == "tree":
        pairs = _candidate_pairs(surface, pts, eps)
    else:
        raise ValueError(f"unknown neighbour search {method!r}")
    d = _pair_distances(surface, pts, pairs)
    keep = d <= eps + EDGE_TOL
    pairs, d = pairs[keep], d[keep]
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order], d[order]


def build_rgg(
    surface: Surface,
    points,
    probe=None,
    epsilon: float = 0.1,
    scheme: WeightScheme | str = WeightScheme.DISTANCE,
    *,
    seed: int = 0,
    method: str = "tree",
    validate: bool = True,
) -> GeoGraph:
    """Connect every pair of nodes at manifold distance ``<= epsilon``.

    ``probe`` is an optional ``(x, y)`` pair appended as the last two nodes.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    scheme = WeightScheme.parse(scheme)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if probe is not None:
        pts = np.vstack([pts, np.asarray(probe, dtype=float).reshape(2, 2)])
    if validate:
        surface.validate(pts)
    pairs, d = threshold_pairs(surface, pts, epsilon, method)
    if scheme is WeightScheme.DISTANCE:
        w = d
    elif scheme is WeightScheme.EPSILON:
        w = np.full(len(d), float(epsilon))
    else:
        w = np.ones(len(d))
    indptr, indices, weights = _to_csr(len(pts), pairs[:, 0], pairs[:, 1], w)
    return GeoGraph(indptr, indices, weights, float(epsilon), scheme, surface, pts, seed)


# --- scaling schedules ----------------------------------------------------------


class DensityClass(str, enum.Enum):
    DENSE = "Dense"
    SPARSE = "Sparse"
    ULTRASPARSE = "Ultrasparse"


@dataclass(frozen=True)
class ScalingSchedule:
    alpha: float
    beta: float
    c_eps: float = 1.0
    c_delta: float = 1.0
    n: int = 1

    def __post_init__(self):
        if not (self.c_eps > 0 and self.c_delta > 0):
            raise ValueError("prefactors must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("scaling exponents must be nonnegative")
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def epsilon(self) -> float:
        return self.c_eps * self.n ** -self.alpha

    @property
    def delta(self) -> float:
        return self.c_delta * self.n ** -self.beta

    def at(self, n: int) -> "ScalingSchedule":
        return ScalingSchedule(self.alpha, self.beta, self.c_eps, self.c_delta, n)

    def check(self):
        """Raise if the connection radius exceeds the ball radius."""
        if self.epsilon > self.delta * (1 + 1e-12):
            raise ValueError(f"epsilon_n={self.epsilon:.6g} exceeds delta_n={self.delta:.6g} at n={self.n}")
        return self


@dataclass(frozen=True)
class RegimeReport:
    alpha: float
    beta: float
    scheme: WeightScheme
    weighted_ok: bool
    weighted_equal_radii_ok: bool
    unweighted_ok: bool
    density_class: DensityClass

    @property
    def applicable_ok(self) -> bool:
        """Whether the exponents are inside the proven regime for ``scheme``."""
        if self.scheme is WeightScheme.DISTANCE:
            return self.weighted_ok or self.weighted_equal_radii_ok
        if self.scheme is WeightScheme.EPSILON:
            return self.unweighted_ok
        return False

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "scheme": self.scheme.value,
            "weighted_ok": self.weighted_ok,
            "weighted_equal_radii_ok": self.weighted_equal_radii_ok,
            "unweighted_ok": self.unweighted_ok,
            "density_class": self.density_class.value,
            "applicable_ok": self.applicable_ok,
        }


def check_regime(schedule: ScalingSchedule, scheme=WeightScheme.DISTANCE, dimension: int = 2) -> RegimeReport:
    a, b, D = schedule.alpha, schedule.beta, dimension
    weighted = 0 < b <= a and a + 2 * b < 1 / D
    equal = math.isclose(a, b, rel_tol=0, abs_tol=1e-12) and 0 < a < 1 / (3 * D)
    unweighted = 0 < b < 1 / 9 and 3 * b < a < (1 - 3 * b) / 2
    if a == 0:
        density = DensityClass.DENSE
    elif math.isclose(a, 1 / D, rel_tol=0, abs_tol=1e-12):
        density = DensityClass.ULTRASPARSE
    else:
        density = DensityClass.SPARSE
    return RegimeReport(a, b, WeightScheme.parse(scheme), weighted, equal, unweighted, density)


def ball_volume(surface: Surface, radius: float) -> float:
    if not radius >= 0:
        raise DomainError("radius must be nonnegative")
    if surface.kind is SurfaceKind.TORUS:
        if radius > 0.5:
            raise DomainError("torus balls overlap themselves beyond radius 1/2")
        return math.pi * radius**2
    if surface.kind is SurfaceKind.SPHERE:
        if radius > math.pi:
            raise DomainError("sphere radius exceeds pi")
        return 2 * math.pi * (1 - math.cos(radius))
    if radius > surface.injectivity_radius:
        raise DomainError("Bolza ball radius exceeds half the systole")
    return 2 * math.pi * (math.cosh(radius) - 1)


def expected_degree(surface: Surface, n: int, epsilon: float) -> float:
    """``n`` times the fraction of the surface covered by an ``epsilon``-ball."""
    return n * ball_volume(surface, epsilon) / surface.volume


# --- edge-list files ----------------------------------------------------------------


class EdgeListError(ValueError):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_edge_list(graph: GeoGraph, path) -> None:
    """Write to a path or to an open text stream."""
    surface = graph.surface.name if graph.surface is not None else "none"
    u, v, w = graph.edge_array()
    target = contextlib.nullcontext(path) if hasattr(path, "write") else open(path, "w")
    with target as fh:
        fh.write(
            f"# surface={surface} n={graph.num_nodes} epsilon={_fmt(graph.epsilon)} "
            f"scheme={graph.scheme.value} seed={int(graph.seed)}\n"
        )
        for a, b, c in zip(u.tolist(), v.tolist(), w.tolist()):
            fh.write(f"{a} {b} {_fmt(c)}\n")
        fh.write("# nodes\n")
        if graph.coords is not None:
            for i, (c1, c2) in enumerate(graph.coords.tolist()):
                fh.write(f"{i} {_fmt(c1)} {_fmt(c2)}\n")


def read_edge_list(path) -> GeoGraph:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    header = None
    edges, weights, coords = [], [], {}
    in_nodes = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if header is None:
                    header = _parse_header(body, lineno)
                elif body == "nodes":
                    in_nodes = True
                else:
                    raise EdgeListError(f"line {lineno}: unexpected comment {line!r}")
                continue
            if header is None:
                raise EdgeListError(f"line {lineno}: missing header")
            parts = line.split()
            try:
                if in_nodes:
                    if len(parts) != 3:
                        raise ValueError
                    coords[int(parts[0])] = (float(parts[1]), float(parts[2]))
                else:
                    if len(parts) != 3:
                        raise ValueError
                    edges.append((int(parts[0]), int(parts[1])))
                    weights.append(float(parts[2]))
            except ValueError:
                what = "node" if in_nodes else "edge"
                raise EdgeListError(f"line {lineno}: malformed {what} line {line!r}") from None
    if header is None:
        raise EdgeListError("empty file: missing header")
    n = header["n"]
    surface = None if header["surface"] == "none" else Surface.of(header["surface"])
    coord_arr = None
    if coords:
        if sorted(coords) != list(range(n)):
            raise EdgeListError("node block must list every node exactly once")
        coord_arr = np.array([coords[i] for i in range(n)])
    try:
        g = GeoGraph.from_edges(
            n,
            np.array(edges, dtype=np.int64).reshape(-1, 2),
            np.array(weights, dtype=float),
            epsilon=header["epsilon"],
            scheme=header["scheme"],
            surface=surface,
            coords=coord_arr,
            seed=header["seed"],
        )
    except ValueError as exc:
        raise EdgeListError(str(exc)) from None
    return g


def _parse_header(body: str, lineno: int) -> dict:
    fields = {}
    for token in body.split():
        if "=" not in token:
            raise EdgeListError(f"line {lineno}: malformed header token {token!r}")
        k, v = token.split("=", 1)
        fields[k] = v
    missing = {"surface", "n", "epsilon", "scheme", "seed"} - fields.keys()
    if missing:
        raise EdgeListError(f"line {lineno}: header missing {sorted(missing)}")
    try:
        return {
            "surface": fields["surface"],
            "n": int(fields["n"]),
            "epsilon": float(fields["epsilon"]),
            "scheme": WeightScheme.parse(fields["scheme"]),
            "seed": int(fields["seed"]),
        }
    except ValueError as exc:
        raise EdgeListError(f"line {lineno}: {exc}") from None
