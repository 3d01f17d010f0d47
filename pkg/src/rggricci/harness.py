"""Monte Carlo sweeps of the rescaled curvature over graph sizes and surfaces.

Each repetition gets its own seed derived from ``(base_seed, surface, n, rep,
attempt)``, so results do not depend on scheduling or on the worker count.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .curvature import IsolatedProbeError, ollivier_mesoscopic, ricci_target
from .geometry import Surface, SurfaceKind, probe_pair
from .graph import ScalingSchedule, WeightScheme, build_rgg, check_regime
from .paths import UnreachableError
from .sampling import SampleMode, SamplerConfig, sample_points

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "surface", "n", "alpha", "beta", "c_eps", "c_delta", "scheme", "seed", "rep",
    "kappa", "kappa_rescaled", "delta", "epsilon", "W", "ball_x", "ball_y", "status", "ms",
)
SUMMARY_COLUMNS = (
    "surface", "n", "alpha", "beta", "c_eps", "c_delta", "scheme", "epsilon", "delta",
    "n_s", "failures", "retries", "mean", "std", "stderr", "target", "error",
    "mean_ball_x", "mean_ball_y", "wall_s",
)
DEFAULT_BUDGET = 10 * 2**13
WORKERS_ENV = "RGGRICCI_WORKERS"
_SURFACE_CODE = {SurfaceKind.TORUS: 0, SurfaceKind.SPHERE: 1, SurfaceKind.BOLZA: 2}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    n_list: tuple[int, ...]
    surfaces: tuple[SurfaceKind, ...] = (SurfaceKind.TORUS, SurfaceKind.SPHERE, SurfaceKind.BOLZA)
    alpha: float = 0.16
    beta: float = 0.16
    c_eps: float = 1.0
    c_delta: float = 1.0
    scheme: WeightScheme = WeightScheme.DISTANCE
    repetitions: int | None = None
    budget: int = DEFAULT_BUDGET
    base_seed: int = 0
    max_retries: int = 5
    sample_mode: SampleMode = SampleMode.FIXED
    method: str = "auto"
    record_timing: bool | None = None
    output: str | None = None

    def __post_init__(self):
        set_ = object.__setattr__
        n_list = tuple(int(n) for n in self.n_list)
        if not n_list:
            raise ConfigError("n_list must not be empty")
        if any(n < 1 for n in n_list) or list(n_list) != sorted(set(n_list)):
            raise ConfigError("n_list must be strictly ascending positive integers")
        set_(self, "n_list", n_list)
        surfaces = (self.surfaces,) if isinstance(self.surfaces, (str, SurfaceKind)) else self.surfaces
        if not surfaces:
            raise ConfigError("no surfaces selected")
        set_(self, "surfaces", tuple(SurfaceKind.parse(s) for s in surfaces))
        set_(self, "scheme", WeightScheme.parse(self.scheme))
        set_(self, "sample_mode", SampleMode.parse(self.sample_mode))
        if self.repetitions is not None and int(self.repetitions) < 1:
            raise ConfigError("repetitions must be at least 1")
        if self.budget < 1:
            raise ConfigError("budget must be positive")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be nonnegative")
        if not 0 <= self.base_seed < 2**63:
            raise ConfigError("base_seed must be a nonnegative 63-bit integer")
        if self.method not in ("auto", "lazy", "full", "astar"):
            raise ConfigError(f"unknown method {self.method!r}")
        try:
            ScalingSchedule(self.alpha, self.beta, self.c_eps, self.c_delta)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def reps_for(self, n: int) -> int:
        if self.repetitions is not None:
            return int(self.repetitions)
        return math.ceil(self.budget / n)

    def schedule(self, n: int) -> ScalingSchedule:
        return ScalingSchedule(self.alpha, self.beta, self.c_eps, self.c_delta, n)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        if "n_list" not in data:
            raise ConfigError("config needs n_list")
        try:
            return cls(**data)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(data)


def repetition_seed(base_seed: int, surface: SurfaceKind, n: int, rep: int, attempt: int = 0) -> int:
    ss = np.random.SeedSequence(base_seed, spawn_key=(_SURFACE_CODE[surface], n, rep, attempt))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class RepetitionResult:
    surface: str
    n: int
    alpha: float
    beta: float
    c_eps: float
    c_delta: float
    scheme: str
    seed: int
    rep: int
    kappa: float
    kappa_rescaled: float
    delta: float
    epsilon: float
    W: float
    ball_x: int
    ball_y: int
    status: str
    ms: float
    attempts: int = field(default=1, compare=False)

    def csv_row(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


def run_repetition(config: ExperimentConfig, surface: SurfaceKind, n: int, rep: int, timing: bool = True):
    """Sample, build and measure one graph; retry with fresh seeds while the probes are cut off."""
    surf = Surface(surface)
    sched = config.schedule(n)
    eps, delta = sched.epsilon, sched.delta
    if eps > delta * (1 + 1e-12):
        raise ConfigError(f"epsilon_n={eps:.6g} exceeds delta_n={delta:.6g} at n={n}")
    rate = n if config.sample_mode is SampleMode.FIXED else n / surf.volume
    start = time.perf_counter()
    base = dict(
        surface=surf.name, n=n, alpha=config.alpha, beta=config.beta, c_eps=config.c_eps,
        c_delta=config.c_delta, scheme=config.scheme.value, rep=rep, delta=delta, epsilon=eps,
    )
    probes = probe_pair(surf, delta)
    for attempt in range(config.max_retries + 1):
        seed = repetition_seed(config.base_seed, surface, n, rep, attempt)
        pts = sample_points(surf, SamplerConfig(rate, config.sample_mode, seed))
        graph = build_rgg(surf, pts, probes, eps, config.scheme, seed=seed, validate=False)
        x, y = graph.probes
        try:
            s = ollivier_mesoscopic(graph, x, y, delta, method=config.method, schedule=sched)
        except (UnreachableError, IsolatedProbeError):
            log.info("%s n=%d rep=%d attempt=%d: probes unreachable, resampling", surf.name, n, rep, attempt)
            continue
        ms = (time.perf_counter() - start) * 1e3 if timing else 0.0
        return RepetitionResult(
            **base, seed=seed, kappa=s.kappa, kappa_rescaled=s.kappa_rescaled, W=s.wasserstein,
            ball_x=s.ball_x_size, ball_y=s.ball_y_size, status="ok", ms=ms, attempts=attempt + 1,
        )
    ms = (time.perf_counter() - start) * 1e3 if timing else 0.0
    nan = math.nan
    return RepetitionResult(
        **base, seed=seed, kappa=nan, kappa_rescaled=nan, W=nan, ball_x=0, ball_y=0,
        status="unreachable", ms=ms, attempts=config.max_retries + 1,
    )


def _task(args):
    return run_repetition(*args)


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
        if value < 1:
            raise ConfigError(f"{WORKERS_ENV} must be positive")
        return value
    return os.cpu_count() or 1


@dataclass(frozen=True)
class SweepRow:
    surface: str
    n: int
    alpha: float
    beta: float
    c_eps: float
    c_delta: float
    scheme: str
    epsilon: float
    delta: float
    n_s: int
    failures: int
    retries: int
    mean: float
    std: float
    stderr: float
    target: float
    error: float
    mean_ball_x: float
    mean_ball_y: float
    wall_s: float


def aggregate(reps: list[RepetitionResult]) -> list[SweepRow]:
    """One row per (surface, n); failed repetitions are counted, not averaged."""
    groups: dict[tuple[str, int], list[RepetitionResult]] = {}
    for r in reps:
        groups.setdefault((r.surface, r.n), []).append(r)
    out = []
    for (name, n), group in groups.items():
        ok = [r for r in group if r.status == "ok"]
        vals = np.array([r.kappa_rescaled for r in ok])
        n_s = len(vals)
        mean = float(vals.mean()) if n_s else math.nan
        std = float(vals.std(ddof=1)) if n_s > 1 else math.nan
        stderr = std / math.sqrt(n_s) if n_s > 1 else math.nan
        target = ricci_target(name).value
        g0 = group[0]
        out.append(
            SweepRow(
                surface=name, n=n, alpha=g0.alpha, beta=g0.beta, c_eps=g0.c_eps, c_delta=g0.c_delta,
                scheme=g0.scheme, epsilon=g0.epsilon, delta=g0.delta, n_s=n_s,
                failures=len(group) - n_s, retries=sum(r.attempts - 1 for r in group),
                mean=mean, std=std, stderr=stderr, target=target, error=abs(mean - target),
                mean_ball_x=float(np.mean([r.ball_x for r in ok])) if ok else math.nan,
                mean_ball_y=float(np.mean([r.ball_y for r in ok])) if ok else math.nan,
                wall_s=sum(r.ms for r in group) / 1e3,
            )
        )
    return out


@dataclass
class SweepResult:
    config: ExperimentConfig
    repetitions: list[RepetitionResult]
    rows: list[SweepRow]


def run_sweep(config: ExperimentConfig, *, workers: int | None = None) -> SweepResult:
    """Run every (surface, n, rep) task, then aggregate.

    ``workers=1`` runs in-process and in task order. With more workers the
    repetitions run in a process pool; values are identical because seeds
    depend only on the task. Per-repetition timings are recorded unless
    ``record_timing`` is false, or left unset in single-worker mode so that
    repeated runs write byte-identical files.
    """
    if workers is None:
        workers = default_workers()
    timing = config.record_timing if config.record_timing is not None else workers > 1
    for n in config.n_list:
        sched = config.schedule(n)
        try:
            sched.check()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for kind in config.surfaces:
            limit = Surface(kind).max_probe_delta()
            if not sched.delta < limit:
                raise ConfigError(f"delta_n={sched.delta:.6g} at n={n} is not below {limit:.6g} on the {Surface(kind).name}")
    tasks = [
        (config, s, n, rep, timing)
        for s in config.surfaces
        for n in config.n_list
        for rep in range(config.reps_for(n))
    ]
    log.info("sweep: %d repetitions on %d worker(s)", len(tasks), workers)
    if workers <= 1:
        reps = []
        for t in tasks:
            r = _task(t)
            log.debug("%s n=%d rep=%d kappa/delta^2=%.6g", r.surface, r.n, r.rep, r.kappa_rescaled)
            reps.append(r)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(_task, tasks, chunksize=1))
    result = SweepResult(config, reps, aggregate(reps))
    if config.output:
        write_outputs(result, config.output)
    return result


# --- reporting -----------------------------------------------------------------------


def summarize(rows: list[SweepRow], config: ExperimentConfig | None = None) -> dict:
    """Error against the Ricci target per surface and n, with trend flags.

    ``monotone`` is true when the error falls strictly at every step in
    ``n``; ``improved`` compares only the smallest and largest ``n``. Both
    are ``None`` for a single ``n``.
    """
    if not rows:
        raise ValueError("nothing to summarize")
    report = {"surfaces": {}}
    for name in dict.fromkeys(r.surface for r in rows):
        mine = sorted((r for r in rows if r.surface == name), key=lambda r: r.n)
        errs = [r.error for r in mine]
        if len(mine) < 2:
            monotone = improved = None
        else:
            monotone = all(b < a for a, b in zip(errs, errs[1:]))
            improved = errs[-1] < errs[0]
        report["surfaces"][name] = {
            "target": mine[0].target,
            "table": [
                {"n": r.n, "mean": r.mean, "stderr": r.stderr, "target": r.target, "error": r.error, "n_s": r.n_s}
                for r in mine
            ],
            "monotone": monotone,
            "improved": improved,
        }
    r0 = rows[0]
    sched = ScalingSchedule(r0.alpha, r0.beta, r0.c_eps, r0.c_delta)
    scheme = config.scheme if config is not None else WeightScheme.parse(r0.scheme)
    report["regime"] = check_regime(sched, scheme).as_dict()
    return report


def _paths(output) -> tuple[Path, Path, Path]:
    out = Path(output)
    stem = out.with_suffix("") if out.suffix else out
    return out if out.suffix else out.with_suffix(".csv"), Path(f"{stem}_summary.csv"), Path(f"{stem}_summary.json")


def write_repetitions(reps: list[RepetitionResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in reps:
            w.writerow(r.csv_row())


def read_repetitions(path) -> list[RepetitionResult]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        out = []
        for row in reader:
            conv = {}
            for k, v in row.items():
                if k in ("surface", "scheme", "status"):
                    conv[k] = v
                elif k in ("n", "seed", "rep", "ball_x", "ball_y"):
                    conv[k] = int(v)
                else:
                    conv[k] = float(v)
            out.append(RepetitionResult(**conv))
        return out


def write_outputs(result: SweepResult, output) -> tuple[Path, Path, Path]:
    """Per-repetition CSV, aggregate CSV and a JSON report next to ``output``."""
    reps_path, sum_path, json_path = _paths(output)
    reps_path.parent.mkdir(parents=True, exist_ok=True)
    write_repetitions(result.repetitions, reps_path)
    with open(sum_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in result.rows:
            w.writerow([getattr(r, c) for c in SUMMARY_COLUMNS])
    cfg = asdict(result.config)
    cfg["surfaces"] = [s.value for s in result.config.surfaces]
    cfg["scheme"] = result.config.scheme.value
    cfg["sample_mode"] = result.config.sample_mode.value
    doc = {
        "config": cfg,
        "rows": [asdict(r) for r in result.rows],
        "summary": summarize(result.rows, result.config),
    }
    with open(json_path, "w") as fh:
        json.dump(doc, fh, indent=2, allow_nan=True)
        fh.write("\n")
    return reps_path, sum_path, json_path


def with_overrides(config: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(config, **{k: v for k, v in changes.items() if v is not None})
