"""Command-line entry point: ``rggricci <command> ...``.

Exit status is 0 on success, 1 on usage errors and 2 on runtime failures.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from .curvature import forman, ollivier_classic, ollivier_mesoscopic
from .geometry import Surface, probe_pair
from .graph import ScalingSchedule, WeightScheme, build_rgg, check_regime, read_edge_list, write_edge_list
from .harness import ConfigError, ExperimentConfig, run_sweep, summarize, with_overrides
from .sampling import SampleMode, SamplerConfig, sample_points
from .transport import TransportProblem, TransportStatus, certify, solve_emd

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _schedule_args(p):
    p.add_argument("--alpha", type=float, default=0.16)
    p.add_argument("--beta", type=float, default=0.16)
    p.add_argument("--c-eps", type=float, default=1.0)
    p.add_argument("--c-delta", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rggricci", description="Ollivier curvature of random geometric graphs")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("generate", help="sample a graph and write its edge list")
    g.add_argument("--surface", required=True, choices=["torus", "sphere", "bolza"])
    g.add_argument("-n", "--n", type=int, required=True)
    _schedule_args(g)
    g.add_argument("--epsilon", type=float, help="connection radius (overrides the schedule)")
    g.add_argument("--delta", type=float, help="probe separation (overrides the schedule)")
    g.add_argument("--no-probes", action="store_true")
    g.add_argument("--scheme", default="distance")
    g.add_argument("--mode", default="fixed", choices=["fixed", "poisson"])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--out", default="-")

    c = sub.add_parser("curvature", help="curvature on an edge-list graph")
    c.add_argument("--graph", required=True)
    c.add_argument("--kind", default="mesoscopic", choices=["mesoscopic", "classic", "f1", "f2"])
    c.add_argument("-x", type=int, help="first node (default: second-to-last node)")
    c.add_argument("-y", type=int, help="second node (default: last node)")
    c.add_argument("--delta", type=float, help="ball radius for the mesoscopic estimator")
    c.add_argument("--method", default="auto", choices=["auto", "lazy", "full", "astar"])

    e = sub.add_parser("emd", help="exact transport cost from CSV inputs")
    e.add_argument("--cost", required=True)
    e.add_argument("--mu", help="source masses (default uniform)")
    e.add_argument("--nu", help="sink masses (default uniform)")
    e.add_argument("--plan", help="write the optimal plan as CSV")
    e.add_argument("--certify", action="store_true", help="print the optimality certificate as JSON")

    s = sub.add_parser("sweep", help="run an experiment config")
    s.add_argument("--config", required=True)
    s.add_argument("--threads", type=int, help="worker processes (1 = deterministic, in-process)")
    s.add_argument("--out", help="override the output path")
    s.add_argument("--seed", type=int, help="override base_seed")

    r = sub.add_parser("regimes", help="report which proven regimes contain (alpha, beta)")
    r.add_argument("--alpha", type=float, required=True)
    r.add_argument("--beta", type=float, required=True)
    r.add_argument("--scheme", default="distance")
    r.add_argument("--dimension", type=int, default=2)
    return parser


def _read_csv_matrix(path, what: str) -> np.ndarray:
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    except OSError as exc:
        raise UsageError(f"cannot read {what} file: {exc}") from None
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    return data


def _fmt_bool(v) -> str:
    return str(v).lower() if isinstance(v, bool) else str(v)


def cmd_generate(a) -> int:
    surface = Surface.of(a.surface)
    sched = ScalingSchedule(a.alpha, a.beta, a.c_eps, a.c_delta, a.n)
    eps = a.epsilon if a.epsilon is not None else sched.epsilon
    delta = a.delta if a.delta is not None else sched.delta
    mode = SampleMode.FIXED if a.mode == "fixed" else SampleMode.POISSON
    rate = a.n if mode is SampleMode.FIXED else a.n / surface.volume
    pts = sample_points(surface, SamplerConfig(rate, mode, a.seed))
    probes = None if a.no_probes else probe_pair(surface, delta)
    graph = build_rgg(surface, pts, probes, eps, a.scheme, seed=a.seed)
    write_edge_list(graph, sys.stdout if a.out == "-" else a.out)
    if a.out != "-":
        print(f"wrote {graph.num_nodes} nodes, {graph.num_edges} edges to {a.out}", file=sys.stderr)
    return EXIT_OK


def cmd_curvature(a) -> int:
    try:
        graph = read_edge_list(a.graph)
    except OSError as exc:
        raise UsageError(f"cannot read graph: {exc}") from None
    n = graph.num_nodes
    x = a.x if a.x is not None else n - 2
    y = a.y if a.y is not None else n - 1
    if a.kind == "mesoscopic":
        delta = a.delta
        if delta is None:
            if graph.surface is None or graph.coords is None:
                raise UsageError("--delta is required for graphs without coordinates")
            delta = float(graph.manifold_distance(x, y))
        s = ollivier_mesoscopic(graph, x, y, delta, method=a.method)
        out = {
            "kappa": s.kappa,
            "kappa_rescaled": s.kappa_rescaled,
            "delta": s.delta,
            "W": s.wasserstein,
            "ball_x": s.ball_x_size,
            "ball_y": s.ball_y_size,
        }
    elif a.kind == "classic":
        out = {"kappa": ollivier_classic(graph, x, y)}
    else:
        out = {a.kind.upper(): forman(graph, x, y, a.kind.upper())}
    print(json.dumps(out))
    return EXIT_OK


def cmd_emd(a) -> int:
    cost = _read_csv_matrix(a.cost, "cost")
    m, k = cost.shape
    mu = _read_csv_matrix(a.mu, "mu").ravel() if a.mu else np.full(m, 1.0 / m)
    nu = _read_csv_matrix(a.nu, "nu").ravel() if a.nu else np.full(k, 1.0 / k)
    try:
        problem = TransportProblem(cost, mu, nu)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    sol = solve_emd(problem)
    if sol.status is not TransportStatus.OPTIMAL:
        print("infeasible: marginals are not balanced", file=sys.stderr)
        return EXIT_RUNTIME
    print(repr(sol.value))
    if a.plan:
        np.savetxt(a.plan, sol.plan, delimiter=",", fmt="%.17g")
    if a.certify:
        print(json.dumps(certify(problem, sol)))
    return EXIT_OK


def cmd_sweep(a) -> int:
    try:
        config = ExperimentConfig.from_toml(a.config)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {a.config}") from None
    except ConfigError as exc:
        raise UsageError(f"bad config: {exc}") from None
    config = with_overrides(config, output=a.out, base_seed=a.seed)
    if a.threads is not None and a.threads < 1:
        raise UsageError("--threads must be positive")
    result = run_sweep(config, workers=a.threads)
    if not config.output:
        print(json.dumps(summarize(result.rows, config), indent=2))
    for r in result.rows:
        print(
            f"{r.surface:6s} n={r.n:<7d} n_s={r.n_s:<4d} mean={r.mean:+.4f} "
            f"stderr={r.stderr:.4f} target={r.target:+.3f} failures={r.failures}",
            file=sys.stderr,
        )
    return EXIT_OK


def cmd_regimes(a) -> int:
    try:
        scheme = WeightScheme.parse(a.scheme)
        sched = ScalingSchedule(a.alpha, a.beta)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = check_regime(sched, scheme, a.dimension).as_dict()
    for key, value in report.items():
        print(f"{key}={_fmt_bool(value)}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "curvature": cmd_curvature,
    "emd": cmd_emd,
    "sweep": cmd_sweep,
    "regimes": cmd_regimes,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
        logging.basicConfig(
            level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
        )
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except (ValueError, IndexError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
