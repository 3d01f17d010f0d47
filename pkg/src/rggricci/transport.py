"""Exact discrete optimal transport by the primal network simplex method.

The transportation problem between ``m`` sources and ``k`` sinks is solved on
the complete bipartite graph augmented with a root node and one artificial arc
per node. The spanning tree is kept strongly feasible (Cunningham's leaving
arc rule), which rules out cycling on the highly degenerate bases produced by
uniform marginals. Entering arcs are chosen by block search.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numba
import numpy as np

MASS_TOL = 1e-12
CERT_TOL = 1e-9


class TransportStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class TransportProblem:
    cost: np.ndarray
    source_mass: np.ndarray
    sink_mass: np.ndarray

    def __post_init__(self):
        cost = np.asarray(self.cost, dtype=float)
        a = np.asarray(self.source_mass, dtype=float).ravel()
        b = np.asarray(self.sink_mass, dtype=float).ravel()
        if cost.ndim != 2 or cost.shape != (a.size, b.size):
            raise ValueError(f"cost shape {cost.shape} does not match marginals ({a.size}, {b.size})")
        if a.size == 0 or b.size == 0:
            raise ValueError("empty marginal")
        if not np.all(np.isfinite(cost)) or np.any(cost < 0):
            raise ValueError("costs must be finite and nonnegative")
        if np.any(a < 0) or np.any(b < 0) or not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("masses must be finite and nonnegative")
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "source_mass", a)
        object.__setattr__(self, "sink_mass", b)

    @classmethod
    def uniform(cls, cost) -> "TransportProblem":
        cost = np.asarray(cost, dtype=float)
        m, k = cost.shape
        return cls(cost, np.full(m, 1.0 / m), np.full(k, 1.0 / k))

    @property
    def balanced(self) -> bool:
        return (
            abs(self.source_mass.sum() - 1.0) <= MASS_TOL
            and abs(self.sink_mass.sum() - 1.0) <= MASS_TOL
        )


@dataclass(frozen=True)
class TransportSolution:
    value: float
    plan: np.ndarray | None
    status: TransportStatus
    source_potential: np.ndarray | None = None
    sink_potential: np.ndarray | None = None
    pivots: int = 0


def dual_objective(problem: TransportProblem, sol: TransportSolution) -> float:
    return float(problem.source_mass @ sol.source_potential + problem.sink_mass @ sol.sink_potential)


def certify(problem: TransportProblem, sol: TransportSolution, tol: float = CERT_TOL) -> dict:
    """Check primal feasibility, dual feasibility, complementary slackness and the duality gap."""
    plan, c = sol.plan, problem.cost
    u, v = sol.source_potential, sol.sink_potential
    slack = c - u[:, None] - v[None, :]
    support = plan > tol
    report = {
        "primal_feasible": bool(
            np.all(plan >= -tol)
            and np.allclose(plan.sum(axis=1), problem.source_mass, atol=tol, rtol=0)
            and np.allclose(plan.sum(axis=0), problem.sink_mass, atol=tol, rtol=0)
        ),
        "dual_feasible": bool(slack.min() >= -tol),
        "complementary_slackness": bool(np.all(np.abs(slack[support]) <= tol)),
        "value_consistent": abs(float((c * plan).sum()) - sol.value) <= tol,
        "duality_gap": sol.value - dual_objective(problem, sol),
    }
    report["optimal"] = (
        report["primal_feasible"]
        and report["dual_feasible"]
        and report["complementary_slackness"]
        and report["value_consistent"]
        and abs(report["duality_gap"]) <= tol
    )
    return report


@numba.njit(cache=True, nogil=True)
def _ns_init(supply, demand):
    """Star-shaped starting tree: every node hangs off the root by its artificial arc."""
    m = supply.shape[0]
    k = demand.shape[0]
    mk = m * k
    nn = m + k + 1
    root = m + k
    flow = np.zeros(mk + m + k)
    parent = np.full(nn, -1, dtype=np.int64)
    pred = np.full(nn, -1, dtype=np.int64)
    up = np.zeros(nn, dtype=np.bool_)
    first_child = np.full(nn, -1, dtype=np.int64)
    next_sib = np.full(nn, -1, dtype=np.int64)
    prev_sib = np.full(nn, -1, dtype=np.int64)
    for v in range(m + k):
        parent[v] = root
        pred[v] = mk + v
        if v < m:
            up[v] = True
            flow[mk + v] = supply[v]
        else:
            flow[mk + v] = demand[v - m]
        next_sib[v] = first_child[root]
        if first_child[root] != -1:
            prev_sib[first_child[root]] = v
        first_child[root] = v
    return flow, parent, pred, up, first_child, next_sib, prev_sib


@numba.njit(cache=True, nogil=True)
def _refresh(q, cost, art, mk, parent, pred, up, depth, pot, first_child, next_sib, stack):
    """Recompute depth and potentials in the subtree rooted at ``q``."""
    top = 0
    stack[top] = q
    top += 1
    while top > 0:
        top -= 1
        c = stack[top]
        p = parent[c]
        if p >= 0:
            a = pred[c]
            ca = cost[a] if a < mk else art
            if up[c]:
                pot[c] = pot[p] - ca
            else:
                pot[c] = pot[p] + ca
            depth[c] = depth[p] + 1
        ch = first_child[c]
        while ch != -1:
            stack[top] = ch
            top += 1
            ch = next_sib[ch]


@numba.njit(cache=True, nogil=True)
def _ns_run(cost, m, k, flow, parent, pred, up, first_child, next_sib, prev_sib, max_iter):
    """Pivot from the given strongly feasible tree until no arc prices out.

    ``cost`` is the flattened m*k matrix; the tree arrays are updated in place,
    so a later call with changed costs resumes from the current basis.
    Returns (potentials, pivots, status) with status 0 optimal, 1 iteration
    limit, 2 artificial flow left (infeasible).
    """
    mk = m * k
    nn = m + k + 1
    root = m + k
    cmax = 0.0
    for a in range(mk):
        if cost[a] > cmax:
            cmax = cost[a]
    # any artificial path i -> root -> j costs more than the direct arc
    art = cmax + 1.0
    tol = 1e-12 * (cmax + 1.0)

    depth = np.zeros(nn, dtype=np.int64)
    pot = np.zeros(nn)
    path = np.empty(nn, dtype=np.int64)
    old_pred = np.empty(nn, dtype=np.int64)
    old_up = np.empty(nn, dtype=np.bool_)
    stack = np.empty(nn, dtype=np.int64)
    _refresh(root, cost, art, mk, parent, pred, up, depth, pot, first_child, next_sib, stack)

    block = max(int(math.sqrt(mk)), 10)
    next_arc = 0
    pivots = 0
    status = 0
    while True:
        # block search pricing
        best = -1
        best_rc = -tol
        scanned = 0
        in_block = 0
        while scanned < mk:
            a = next_arc
            rc = cost[a] + pot[a // k] - pot[m + a % k]
            if rc < best_rc:
                best_rc = rc
                best = a
            next_arc += 1
            if next_arc == mk:
                next_arc = 0
            scanned += 1
            in_block += 1
            if in_block == block:
                if best >= 0:
                    break
                in_block = 0
        if best < 0:
            break
        if pivots >= max_iter:
            status = 1
            break
        pivots += 1

        e = best
        u_in = e // k
        v_in = m + e % k
        # join node of the cycle
        a1 = u_in
        b1 = v_in
        while a1 != b1:
            if depth[a1] > depth[b1]:
                a1 = parent[a1]
            elif depth[b1] > depth[a1]:
                b1 = parent[b1]
            else:
                a1 = parent[a1]
                b1 = parent[b1]
        join = a1

        # leaving arc: last blocking arc along the cycle orientation from the join
        delta = np.inf
        u_out = -1
        side = 0
        s = u_in
        while s != join:
            if up[s]:
                d = flow[pred[s]]
                if d < delta:
                    delta = d
                    u_out = s
                    side = 1
            s = parent[s]
        s = v_in
        while s != join:
            if not up[s]:
                d = flow[pred[s]]
                if d <= delta:
                    delta = d
                    u_out = s
                    side = 2
            s = parent[s]

        if delta > 0:
            flow[e] += delta
            s = u_in
            while s != join:
                if up[s]:
                    flow[pred[s]] -= delta
                else:
                    flow[pred[s]] += delta
                s = parent[s]
            s = v_in
            while s != join:
                if up[s]:
                    flow[pred[s]] += delta
                else:
                    flow[pred[s]] -= delta
                s = parent[s]

        # re-hang the subtree cut off by the leaving arc
        if side == 1:
            q = u_in
            new_parent = v_in
        else:
            q = v_in
            new_parent = u_in
        plen = 0
        s = q
        while True:
            path[plen] = s
            old_pred[plen] = pred[s]
            old_up[plen] = up[s]
            plen += 1
            if s == u_out:
                break
            s = parent[s]
        for t in range(plen):
            c = path[t]
            p = parent[c]
            ps = prev_sib[c]
            ns = next_sib[c]
            if ps != -1:
                next_sib[ps] = ns
            else:
                first_child[p] = ns
            if ns != -1:
                prev_sib[ns] = ps
        for t in range(plen):
            c = path[t]
            if t == 0:
                p = new_parent
                pred[c] = e
                up[c] = c == u_in
            else:
                p = path[t - 1]
                pred[c] = old_pred[t - 1]
                up[c] = not old_up[t - 1]
            parent[c] = p
            prev_sib[c] = -1
            next_sib[c] = first_child[p]
            if first_child[p] != -1:
                prev_sib[first_child[p]] = c
            first_child[p] = c
        _refresh(q, cost, art, mk, parent, pred, up, depth, pot, first_child, next_sib, stack)

    if status == 0:
        for v in range(m + k):
            if flow[mk + v] > 1e-12:
                status = 2
                break
    return pot, pivots, status


class NetworkSimplex:
    """Transportation simplex over fixed marginals; costs may change between solves.

    Re-solving after a cost change starts from the previous optimal basis,
    which stays primal feasible because only the objective moved.
    """

    def __init__(self, supply, demand):
        self.supply = np.ascontiguousarray(supply, dtype=float)
        self.demand = np.ascontiguousarray(demand, dtype=float)
        self.m, self.k = len(self.supply), len(self.demand)
        self._state = _ns_init(self.supply, self.demand)
        self.pivots = 0

    def solve(self, cost, max_iter: int | None = None):
        """Return ``(flow (m, k), potentials, status)`` for the flattened ``cost``."""
        cost = np.ascontiguousarray(cost, dtype=float).ravel()
        if cost.size != self.m * self.k:
            raise ValueError("cost size does not match the marginals")
        if max_iter is None:
            max_iter = 50 * (self.m + self.k) ** 2 + 10_000
        pot, pivots, status = _ns_run(cost, self.m, self.k, *self._state, max_iter)
        self.pivots += pivots
        flow = self._state[0][: self.m * self.k].reshape(self.m, self.k)
        return flow.copy(), pot, int(status)

    def duals(self, pot) -> tuple[np.ndarray, np.ndarray]:
        """Node potentials as ``(u, v)`` with ``u_i + v_j <= c_ij``, tight on tree arcs, ``min u = 0``."""
        u = -pot[: self.m]
        v = pot[self.m : self.m + self.k]
        shift = u.min()
        return u - shift, v + shift


def _is_uniform(x: np.ndarray) -> bool:
    return bool(np.all(np.abs(x - x[0]) <= 1e-12 * x[0]))


def solve_emd(problem: TransportProblem, *, max_iter: int | None = None) -> TransportSolution:
    """Minimum-cost coupling of the two marginals with an optimality certificate.

    Zero-mass atoms are dropped before solving. Uniform marginals are scaled to
    integer supplies so every pivot is exact in floating point.
    """
    if not problem.balanced:
        return TransportSolution(math.nan, None, TransportStatus.INFEASIBLE)
    a_full, b_full = problem.source_mass, problem.sink_mass
    rows = np.flatnonzero(a_full > 0)
    cols = np.flatnonzero(b_full > 0)
    a, b = a_full[rows], b_full[cols]
    cost = np.ascontiguousarray(problem.cost[np.ix_(rows, cols)])
    m, k = cost.shape
    if _is_uniform(a) and _is_uniform(b):
        supply = np.full(m, float(k))
        demand = np.full(k, float(m))
        scale = float(m * k)
    else:
        supply, demand, scale = a.copy(), b * (a.sum() / b.sum()), 1.0
    if max_iter is None:
        max_iter = 50 * (m + k) * (m + k) + 10_000
    ns = NetworkSimplex(supply, demand)
    flow, pot, status = ns.solve(cost, max_iter)
    pivots = ns.pivots
    if status == 1:
        raise RuntimeError(f"network simplex hit the iteration limit ({max_iter})")
    if status == 2:
        return TransportSolution(math.nan, None, TransportStatus.INFEASIBLE, pivots=pivots)
    plan_sub = flow / scale
    plan = np.zeros(problem.cost.shape)
    plan[np.ix_(rows, cols)] = plan_sub
    u_sub, v_sub = ns.duals(pot)
    u = np.zeros(problem.cost.shape[0])
    v = np.zeros(problem.cost.shape[1])
    u[rows] = u_sub
    v[cols] = v_sub
    # give zero-mass atoms the tightest feasible potential so dual feasibility holds everywhere
    if len(rows) < len(u):
        for i in np.setdiff1d(np.arange(len(u)), rows):
            u[i] = np.min(problem.cost[i, cols] - v_sub) if len(cols) else 0.0
    if len(cols) < len(v):
        for j in np.setdiff1d(np.arange(len(v)), cols):
            v[j] = np.min(problem.cost[:, j] - u)
    value = float(np.sum(cost * plan_sub))
    return TransportSolution(value, plan, TransportStatus.OPTIMAL, u, v, int(pivots))


def wasserstein_between_balls(graph, ball_x, ball_y, dmatrix) -> float:
    """Transport distance between the uniform measures on two balls."""
    values = getattr(dmatrix, "values", dmatrix)
    if values.shape != (len(ball_x), len(ball_y)):
        raise ValueError(f"distance matrix shape {values.shape} != ball sizes ({len(ball_x)}, {len(ball_y)})")
    if hasattr(dmatrix, "row_nodes"):
        if not (np.array_equal(dmatrix.row_nodes, ball_x.nodes) and np.array_equal(dmatrix.col_nodes, ball_y.nodes)):
            raise ValueError("distance matrix indexed inconsistently with the balls")
    sol = solve_emd(TransportProblem.uniform(values))
    if sol.status is not TransportStatus.OPTIMAL:
        raise RuntimeError("transport solver failed on a balanced problem")
    return sol.value
