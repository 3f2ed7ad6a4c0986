import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fluidris import plotdata
from fluidris.baselines import BaselineSpec
from fluidris.harness import (
    MANIFEST_NAME,
    SUMMARY_NAME,
    ExperimentPlan,
    load_summary,
    replay,
    run,
)
from fluidris.scenario import ScenarioConfig, SolverSettings


def _fast_cfg(**kw):
    base = dict(
        k_users=2, m_ris=4,
        user_positions=((40.0, 10.0, 1.7), (-35.0, -50.0, 1.7)),
        solver=SolverSettings(outer_max_iter=2, srocr_max_iter=5, sca_max_iter=5),
    )
    base.update(kw)
    return ScenarioConfig(**base)


def _fast_plan(outdir, schemes=("random", "zero_forcing"), seeds=(0, 1, 2, 3, 4), **kw):
    return ExperimentPlan(
        config=_fast_cfg(**kw),
        schemes=list(schemes),
        seeds=list(seeds),
        outdir=str(outdir),
        baseline=BaselineSpec(budget=30),
    )


def test_run_cardinality(tmp_path):
    plan = _fast_plan(tmp_path / "out")
    out = run(plan)
    rows = load_summary(out)
    assert len(rows) == 10
    traces = list((out / "traces").glob("*.csv"))
    assert len(traces) == 10
    assert (out / MANIFEST_NAME).exists()


def test_unknown_scheme_rejected(tmp_path):
    with pytest.raises(ValueError, match="unknown schemes"):
        _fast_plan(tmp_path, schemes=("not_a_scheme",))


def test_replay_byte_identical(tmp_path):
    plan = _fast_plan(tmp_path / "a", seeds=(0, 1))
    out = run(plan)
    out2 = replay(out / MANIFEST_NAME, tmp_path / "b")
    a = (out / SUMMARY_NAME).read_bytes()
    b = (out2 / SUMMARY_NAME).read_bytes()
    assert a == b


def test_parallel_run_matches_serial(tmp_path):
    plan_a = _fast_plan(tmp_path / "ser", seeds=(0, 1, 2))
    run(plan_a)
    os.environ["FLUIDRIS_WORKERS"] = "2"
    try:
        plan_b = _fast_plan(tmp_path / "par", seeds=(0, 1, 2))
        run(plan_b)
    finally:
        del os.environ["FLUIDRIS_WORKERS"]
    assert (tmp_path / "ser" / SUMMARY_NAME).read_bytes() == \
        (tmp_path / "par" / SUMMARY_NAME).read_bytes()


def test_float_round_trip(tmp_path):
    out = run(_fast_plan(tmp_path / "rt", seeds=(0,)))
    with open(out / SUMMARY_NAME, newline="") as fh:
        for row in csv.DictReader(fh):
            v = float(row["sum_rate"])
            assert repr(v) == row["sum_rate"]


def test_failed_row_is_recorded_not_raised(tmp_path, monkeypatch):
    from fluidris import harness

    def boom(cfg, state, spec):
        raise RuntimeError("synthetic failure")

    monkeypatch.setitem(harness.SCHEMES, "random", boom)
    out = run(_fast_plan(tmp_path / "f", schemes=("random", "zero_forcing"), seeds=(0,)))
    rows = load_summary(out)
    failed = [r for r in rows if r["error"]]
    fine = [r for r in rows if not r["error"]]
    assert len(failed) == 1 and "synthetic failure" in failed[0]["error"]
    assert len(fine) == 1


def test_sweep_points_and_plotdata(tmp_path):
    plan = ExperimentPlan(
        config=_fast_cfg(),
        schemes=["random"],
        seeds=[0, 1],
        outdir=str(tmp_path / "sw"),
        sweep={"k_users": [1, 2], "m_ris": [4, 8]},
        baseline=BaselineSpec(budget=10),
    )
    out = run(plan)
    rows = load_summary(out)
    assert len(rows) == 8    # 2 x 2 sweep x 1 scheme x 2 seeds
    made = plotdata.emit_plotdata(out, "kmn_sweep")
    assert len(made) == 2    # one curve per (scheme, m_ris); x-axis is k_users
    header = made[0].read_text().splitlines()[0].split()
    assert header == ["k_users", "median_sum_rate"]


def test_convergence_plotdata(tmp_path):
    out = run(_fast_plan(tmp_path / "conv", schemes=("altopt",), seeds=(0,)))
    made = plotdata.emit_plotdata(out, "convergence")
    assert len(made) == 1
    lines = made[0].read_text().splitlines()
    assert lines[0].split() == ["iteration", "sum_rate"]
    assert len(lines) >= 2


def test_benchmark_bars(tmp_path):
    out = run(_fast_plan(tmp_path / "bars", seeds=(0, 1, 2)))
    made = plotdata.emit_plotdata(out, "benchmark_bars")
    rows = made[0].read_text().splitlines()
    assert rows[0].split() == ["scheme", "median_rate", "p25", "p75"]
    assert len(rows) == 3


def test_missing_axis_errors(tmp_path):
    out = run(_fast_plan(tmp_path / "na", seeds=(0,)))
    with pytest.raises(plotdata.MissingAxisError):
        plotdata.emit_plotdata(out, "kmn_sweep")
    with pytest.raises(plotdata.MissingAxisError):
        plotdata.emit_plotdata(out, "deployment_sweep")


def test_medians_recomputable(tmp_path):
    out = run(_fast_plan(tmp_path / "med", seeds=(0, 1, 2)))
    rows = [r for r in load_summary(out) if not r["error"]]
    for scheme in {r["scheme"] for r in rows}:
        vals = [r["sum_rate"] for r in rows if r["scheme"] == scheme]
        assert np.isfinite(np.median(vals))


def test_cli_run_and_replay(tmp_path):
    import yaml

    from fluidris.scenario import config_to_dict

    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text(yaml.safe_dump(config_to_dict(_fast_cfg())))
    env = dict(os.environ, PYTHONPATH=str(Path(__file__).resolve().parents[1] / "src"))
    out1 = tmp_path / "o1"
    r = subprocess.run(
        [sys.executable, "-m", "fluidris.cli", "run", "--config", str(cfg_path),
         "--schemes", "random", "--seeds", "0-2", "--out", str(out1)],
        capture_output=True, text=True, env=env)
    assert r.returncode == 0, r.stderr
    assert (out1 / SUMMARY_NAME).exists()
    out2 = tmp_path / "o2"
    r2 = subprocess.run(
        [sys.executable, "-m", "fluidris.cli", "replay", str(out1 / MANIFEST_NAME),
         "--out", str(out2)],
        capture_output=True, text=True, env=env)
    assert r2.returncode == 0, r2.stderr
    assert (out1 / SUMMARY_NAME).read_bytes() == (out2 / SUMMARY_NAME).read_bytes()


def test_half_fa_scheme_runs(tmp_path):
    out = run(_fast_plan(tmp_path / "hf", schemes=("altopt_half_fa",), seeds=(0,)))
    rows = load_summary(out)
    assert not rows[0]["error"]
