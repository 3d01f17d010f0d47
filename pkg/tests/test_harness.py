import csv
import json
import math

import numpy as np
import pytest

from rggricci.geometry import SurfaceKind
from rggricci.harness import (
    CSV_COLUMNS,
    ConfigError,
    ExperimentConfig,
    SweepRow,
    aggregate,
    default_workers,
    read_repetitions,
    repetition_seed,
    run_repetition,
    run_sweep,
    summarize,
)


def row(surface, n, mean, target=0.0):
    return SweepRow(
        surface=surface, n=n, alpha=0.16, beta=0.16, c_eps=1.0, c_delta=1.0, scheme="ManifoldDistance",
        epsilon=0.3, delta=0.3, n_s=10, failures=0, retries=0, mean=mean, std=0.1, stderr=0.1 / math.sqrt(10),
        target=target, error=abs(mean - target), mean_ball_x=10.0, mean_ball_y=10.0, wall_s=0.0,
    )


def test_budget_rule():
    cfg = ExperimentConfig(n_list=(2**17,), budget=10 * 2**17)
    assert cfg.reps_for(2**17) == 10
    assert ExperimentConfig(n_list=(2**9,)).reps_for(2**9) == 160
    assert ExperimentConfig(n_list=(1000,)).reps_for(1000) == math.ceil(10 * 2**13 / 1000)
    assert ExperimentConfig(n_list=(2**9,), repetitions=3).reps_for(2**9) == 3


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict({"n_list": [512], "aplha": 0.2})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"alpha": 0.2})
    with pytest.raises(ConfigError):
        ExperimentConfig(n_list=())
    with pytest.raises(ConfigError):
        ExperimentConfig(n_list=(1024, 512))
    with pytest.raises(ConfigError):
        ExperimentConfig(n_list=(512,), repetitions=0)
    with pytest.raises(ValueError):
        ExperimentConfig(n_list=(512,), surfaces=("klein",))
    p = tmp_path / "c.toml"
    p.write_text('n_list = [512, 1024]\nsurfaces = ["sphere"]\nscheme = "epsilon"\nrepetitions = 2\n')
    cfg = ExperimentConfig.from_toml(p)
    assert cfg.n_list == (512, 1024) and cfg.surfaces == (SurfaceKind.SPHERE,)
    p.write_text("n_list = [512\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_toml(p)


def test_radii_checked_before_running():
    with pytest.raises(ConfigError, match="exceeds"):
        run_sweep(ExperimentConfig(n_list=(512,), alpha=0.1, beta=0.3, repetitions=1), workers=1)
    with pytest.raises(ConfigError):
        run_sweep(ExperimentConfig(n_list=(512,), c_eps=3, c_delta=3, repetitions=1), workers=1)


def test_seed_derivation():
    a = repetition_seed(0, SurfaceKind.TORUS, 512, 3)
    assert a == repetition_seed(0, SurfaceKind.TORUS, 512, 3)
    others = {
        repetition_seed(1, SurfaceKind.TORUS, 512, 3),
        repetition_seed(0, SurfaceKind.SPHERE, 512, 3),
        repetition_seed(0, SurfaceKind.TORUS, 1024, 3),
        repetition_seed(0, SurfaceKind.TORUS, 512, 4),
        repetition_seed(0, SurfaceKind.TORUS, 512, 3, attempt=1),
    }
    assert a not in others and len(others) == 5


def test_torus_sweep_row(tmp_path):
    cfg = ExperimentConfig(n_list=(2**10,), surfaces=("torus",), repetitions=20, output=str(tmp_path / "t.csv"))
    result = run_sweep(cfg, workers=1)
    assert len(result.rows) == 1
    r = result.rows[0]
    assert r.n_s == 20 and r.failures == 0 and math.isfinite(r.mean) and r.target == 0.0
    assert r.stderr == pytest.approx(r.std / math.sqrt(r.n_s), rel=1e-12)
    assert (tmp_path / "t_summary.csv").exists()
    doc = json.loads((tmp_path / "t_summary.json").read_text())
    assert doc["summary"]["regime"]["weighted_equal_radii_ok"] is True
    with open(tmp_path / "t.csv") as fh:
        assert tuple(next(csv.reader(fh))) == CSV_COLUMNS


def test_aggregate_recomputable_from_csv(tmp_path):
    cfg = ExperimentConfig(
        n_list=(256, 512), surfaces=("sphere", "bolza"), repetitions=6, output=str(tmp_path / "s.csv"),
        alpha=0.25, beta=0.2,
    )
    result = run_sweep(cfg, workers=1)
    reps = read_repetitions(tmp_path / "s.csv")
    assert reps == result.repetitions
    for a, b in zip(aggregate(reps), result.rows):
        for f in ("mean", "std", "stderr"):
            assert abs(getattr(a, f) - getattr(b, f)) <= 1e-12
    # independent recomputation straight from the file
    with open(tmp_path / "s.csv") as fh:
        raw = list(csv.DictReader(fh))
    for r in result.rows:
        vals = np.array([float(x["kappa_rescaled"]) for x in raw if x["surface"] == r.surface and int(x["n"]) == r.n])
        assert abs(vals.mean() - r.mean) <= 1e-12
        assert abs(vals.std(ddof=1) - r.std) <= 1e-12
        assert abs(vals.std(ddof=1) / math.sqrt(len(vals)) - r.stderr) <= 1e-12


def test_failures_recorded_not_dropped():
    # a tiny connection radius next to a wide probe gap leaves the probes cut off
    cfg = ExperimentConfig(
        n_list=(16,), surfaces=("torus",), alpha=0.5, beta=0.1, c_eps=0.05, c_delta=0.05,
        repetitions=3, max_retries=1,
    )
    result = run_sweep(cfg, workers=1)
    assert all(r.status == "unreachable" and math.isnan(r.kappa) for r in result.repetitions)
    assert all(r.attempts == 2 for r in result.repetitions)
    row_ = result.rows[0]
    assert row_.failures == 3 and row_.n_s == 0 and math.isnan(row_.mean)


def test_poisson_mode_runs():
    cfg = ExperimentConfig(n_list=(300,), surfaces=("bolza",), repetitions=2, sample_mode="poisson", alpha=0.3, beta=0.2)
    reps = [run_repetition(cfg, SurfaceKind.BOLZA, 300, r, timing=False) for r in range(2)]
    assert all(r.status == "ok" and r.ms == 0.0 for r in reps)


def test_summarize_examples():
    rows = [row("torus", n, m) for n, m in ((512, 0.04), (1024, 0.02), (2048, 0.01))]
    s = summarize(rows)
    assert s["surfaces"]["torus"]["monotone"] is True and s["surfaces"]["torus"]["improved"] is True
    assert [t["error"] for t in s["surfaces"]["torus"]["table"]] == [0.04, 0.02, 0.01]
    one = summarize([row("torus", 512, 0.04)])
    assert one["surfaces"]["torus"]["monotone"] is None and one["surfaces"]["torus"]["improved"] is None
    sph = summarize([row("sphere", n, 0.1, 0.125) for n in (512, 1024)])
    assert all(t["target"] == 0.125 for t in sph["surfaces"]["sphere"]["table"])
    assert sph["surfaces"]["sphere"]["monotone"] is False
    assert s["regime"]["weighted_equal_radii_ok"] is True
    with pytest.raises(ValueError):
        summarize([])


def test_worker_env(monkeypatch):
    monkeypatch.setenv("RGGRICCI_WORKERS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("RGGRICCI_WORKERS", "zero")
    with pytest.raises(ConfigError):
        default_workers()
