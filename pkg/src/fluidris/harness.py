"""Experiment orchestration: scheme registry, Monte-Carlo sweeps, CSV and
plot-data emission, and manifest-based exact replay.

Summary CSVs contain no wall-clock columns so a replay is byte-identical;
timings live in the per-run trace files only.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import altopt, baselines
from .channel import state_rate
from .scenario import ScenarioConfig, config_from_dict, config_to_dict, generate_scenario

SUMMARY_NAME = "summary.csv"
MANIFEST_NAME = "manifest.json"

SUMMARY_COLUMNS = ["run_id", "scenario_hash", "scheme", "seed", "sweep_point",
                   "sum_rate", "per_user_rates", "min_rate", "qos_violation",
                   "iterations", "error"]
TRACE_COLUMNS = ["iteration", "sum_rate", "per_user_rates", "min_rate",
                 "qos_violation", "wall_ms"]


def _fmt(x) -> str:
    """Shortest float form that round-trips (17 significant digits)."""
    return repr(float(x))


@dataclass
class ExperimentPlan:
    config: ScenarioConfig
    schemes: list[str]
    seeds: list[int]
    outdir: str
    sweep: dict[str, list] = field(default_factory=dict)
    baseline: baselines.BaselineSpec = field(default_factory=baselines.BaselineSpec)

    def __post_init__(self):
        if not self.schemes or not self.seeds:
            raise ValueError("plan needs at least one scheme and one seed")
        unknown = [s for s in self.schemes if s not in SCHEMES]
        if unknown:
            raise ValueError(f"unknown schemes: {unknown}; known: {sorted(SCHEMES)}")


# -- scheme implementations ------------------------------------------------------


def _trace_rows(trace: altopt.ConvergenceTrace):
    rows = []
    for i in range(trace.iterations):
        rows.append({
            "iteration": i,
            "sum_rate": trace.sum_rate[i],
            "per_user_rates": trace.per_user_rates[i],
            "min_rate": float(np.min(trace.per_user_rates[i])),
            "qos_violation": trace.qos_residual[i],
            "wall_ms": trace.wall_ms[i],
        })
    return rows


def _run_altopt(cfg, state, moves=altopt.ALL_MOVES, ris_enabled=True, beam_step="srocr"):
    final, trace = altopt.alternating_optimization(
        state, cfg, moves=moves, ris_enabled=ris_enabled, beam_step=beam_step)
    return final, _trace_rows(trace), ris_enabled


def _one_shot(cfg, state, ris_enabled=True):
    t0 = time.perf_counter()
    rep = state_rate(state, cfg, ris_enabled=ris_enabled)
    row = {
        "iteration": 0,
        "sum_rate": rep.sum_rate,
        "per_user_rates": np.asarray(rep.per_user_rate),
        "min_rate": float(np.min(rep.per_user_rate)),
        "qos_violation": max(0.0, cfg.r_min_bps - float(np.min(rep.per_user_rate))),
        "wall_ms": 1e3 * (time.perf_counter() - t0),
    }
    return state, [row], ris_enabled


def _scheme_altopt(cfg, state, spec):
    return _run_altopt(cfg, state)


def _scheme_no_fa(cfg, state, spec):
    return _run_altopt(cfg, state, moves=("beamform", "ris", "uav"))


def _scheme_no_uav(cfg, state, spec):
    return _run_altopt(cfg, state, moves=("beamform", "ris", "fa"))


def _scheme_no_ris(cfg, state, spec):
    return _run_altopt(cfg, state, ris_enabled=False)


def _scheme_no_bf(cfg, state, spec):
    # element repositioning acts as analog beamforming, so the no-beamforming
    # case freezes beams, phases, and element positions, leaving deployment
    state = baselines.randomized_beams(state, cfg, cfg.seed)
    return _run_altopt(cfg, state, moves=("uav",))


def _scheme_half_fa(cfg, state, spec):
    n = cfg.n_elements
    mask = tuple(i < (n + 1) // 2 for i in range(n))
    cfg2 = cfg.replace(mobility_mask=mask)
    return _run_altopt(cfg2, state)


def _scheme_drop_rank(cfg, state, spec):
    return _run_altopt(cfg, state, beam_step="drop_rank")


def _scheme_zero_forcing(cfg, state, spec):
    from .channel import assemble_channels

    chans = assemble_channels(state, cfg)
    try:
        W = baselines.zero_forcing(chans, cfg)
        state = state.replace(W=W)
    except baselines.ZeroForcingError:
        state = baselines.random_baseline(state, cfg, cfg.seed)
    return _one_shot(cfg, state)


def _scheme_ga(cfg, state, spec):
    final = baselines.ga_optimize(state, cfg, spec)
    return _one_shot(cfg, final)


def _scheme_mab_quantized(cfg, state, spec):
    import dataclasses

    final = baselines.mab_optimize(state, cfg, dataclasses.replace(spec, zoom=False))
    return _one_shot(cfg, final)


def _scheme_mab_continuous(cfg, state, spec):
    import dataclasses

    final = baselines.mab_optimize(state, cfg, dataclasses.replace(spec, zoom=True))
    return _one_shot(cfg, final)


def _scheme_random(cfg, state, spec):
    final = baselines.random_baseline(state, cfg, cfg.seed)
    return _one_shot(cfg, final)


SCHEMES = {
    "altopt": _scheme_altopt,
    "altopt_no_fa": _scheme_no_fa,
    "altopt_no_uav": _scheme_no_uav,
    "altopt_no_ris": _scheme_no_ris,
    "altopt_no_bf": _scheme_no_bf,
    "altopt_half_fa": _scheme_half_fa,
    "drop_rank": _scheme_drop_rank,
    "zero_forcing": _scheme_zero_forcing,
    "ga": _scheme_ga,
    "mab_quantized": _scheme_mab_quantized,
    "mab_continuous": _scheme_mab_continuous,
    "random": _scheme_random,
}


# -- execution ------------------------------------------------------------------


def _sweep_points(sweep: dict) -> list[dict]:
    if not sweep:
        return [{}]
    keys = sorted(sweep)
    points = [{}]
    for key in keys:
        points = [dict(p, **{key: v}) for p in points for v in sweep[key]]
    return points


def _apply_point(cfg: ScenarioConfig, point: dict, seed: int) -> ScenarioConfig:
    overrides = dict(point)
    if "n_elements" in overrides:
        # split N into the near-square grid used throughout
        n = int(overrides.pop("n_elements"))
        rows = int(np.floor(np.sqrt(n)))
        while n % rows:
            rows -= 1
        overrides["n_h"], overrides["n_v"] = rows, n // rows
    if "ris_distance" in overrides:
        d = float(overrides.pop("ris_distance"))
        z = cfg.ris_position[2]
        overrides["ris_position"] = (d, 0.0, z)
    if "k_users" in overrides and cfg.user_positions is not None \
            and len(cfg.user_positions) != int(overrides["k_users"]):
        overrides["user_positions"] = None    # fall back to the seeded disk draw
    return cfg.replace(**overrides, seed=seed)


def _point_label(point: dict) -> str:
    if not point:
        return "-"
    return ",".join(f"{k}={point[k]}" for k in sorted(point))


def _execute_row(args):
    base_doc, point, scheme, seed, spec = args
    cfg = _apply_point(config_from_dict(base_doc), point, seed)
    cfg = cfg.resolved()
    row = {
        "run_id": f"{_point_label(point)}__{scheme}__{seed}".replace(" ", ""),
        "scenario_hash": cfg.content_hash(),
        "scheme": scheme,
        "seed": seed,
        "sweep_point": _point_label(point),
        "error": "",
    }
    try:
        state = generate_scenario(cfg)
        final, trace_rows, ris_enabled = SCHEMES[scheme](cfg, state, spec)
        last = trace_rows[-1]
        row.update(
            sum_rate=last["sum_rate"],
            per_user_rates=last["per_user_rates"],
            min_rate=last["min_rate"],
            qos_violation=last["qos_violation"],
            iterations=len(trace_rows),
        )
        return row, trace_rows
    except Exception as exc:   # fail-soft: the sweep continues
        row.update(sum_rate=np.nan, per_user_rates=np.array([]),
                   min_rate=np.nan, qos_violation=np.nan, iterations=0,
                   error=f"{type(exc).__name__}: {exc}")
        return row, []


def _rates_str(rates) -> str:
    return "|".join(_fmt(v) for v in np.atleast_1d(rates))


def run(plan: ExperimentPlan) -> Path:
    """Execute a plan; returns the output directory. Fail-soft per row."""
    outdir = Path(plan.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    base_doc = config_to_dict(plan.config)
    jobs = [(base_doc, point, scheme, seed, plan.baseline)
            for point in _sweep_points(plan.sweep)
            for scheme in plan.schemes
            for seed in plan.seeds]

    workers = int(os.environ.get("FLUIDRIS_WORKERS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_execute_row, jobs))
    else:
        results = [_execute_row(j) for j in jobs]

    results.sort(key=lambda rt: (rt[0]["sweep_point"], rt[0]["scheme"], rt[0]["seed"]))
    traces_dir = outdir / "traces"
    traces_dir.mkdir(exist_ok=True)
    summary_rows = []
    for row, trace_rows in results:
        summary_rows.append(row)
        if trace_rows:
            tpath = traces_dir / f"{row['run_id']}.csv"
            with open(tpath, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(TRACE_COLUMNS)
                for tr in trace_rows:
                    w.writerow([tr["iteration"], _fmt(tr["sum_rate"]),
                                _rates_str(tr["per_user_rates"]),
                                _fmt(tr["min_rate"]), _fmt(tr["qos_violation"]),
                                _fmt(tr["wall_ms"])])

    with open(outdir / SUMMARY_NAME, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for row in summary_rows:
            w.writerow([row["run_id"], row["scenario_hash"], row["scheme"],
                        row["seed"], row["sweep_point"], _fmt(row["sum_rate"]),
                        _rates_str(row["per_user_rates"]), _fmt(row["min_rate"]),
                        _fmt(row["qos_violation"]), row["iterations"], row["error"]])

    manifest = {
        "version": __version__,
        "config": base_doc,
        "config_hash": plan.config.content_hash(),
        "schemes": plan.schemes,
        "seeds": plan.seeds,
        "sweep": plan.sweep,
        "baseline": plan.baseline.__dict__,
        "n_rows": len(summary_rows),
        "n_failed": sum(1 for r in summary_rows if r["error"]),
    }
    with open(outdir / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)

    _check_summary_consistency(outdir)
    return outdir


def replay(manifest_path, outdir) -> Path:
    """Re-run the experiment recorded in a manifest into a fresh directory."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    spec = baselines.BaselineSpec(**manifest["baseline"])
    plan = ExperimentPlan(
        config=config_from_dict(manifest["config"]),
        schemes=list(manifest["schemes"]),
        seeds=list(manifest["seeds"]),
        sweep={k: list(v) for k, v in manifest["sweep"].items()},
        outdir=str(outdir),
        baseline=spec,
    )
    return run(plan)


def load_summary(outdir) -> list[dict]:
    rows = []
    with open(Path(outdir) / SUMMARY_NAME, newline="") as fh:
        for row in csv.DictReader(fh):
            row["sum_rate"] = float(row["sum_rate"])
            row["min_rate"] = float(row["min_rate"])
            row["qos_violation"] = float(row["qos_violation"])
            row["seed"] = int(row["seed"])
            rows.append(row)
    return rows


def _check_summary_consistency(outdir) -> None:
    """Per-scheme medians must be recomputable from the row data."""
    rows = [r for r in load_summary(outdir) if not r["error"]]
    for scheme in {r["scheme"] for r in rows}:
        vals = [r["sum_rate"] for r in rows if r["scheme"] == scheme]
        med = float(np.median(vals))
        again = float(np.median(sorted(vals)))
        if not (np.isnan(med) and np.isnan(again)) and med != again:
            raise AssertionError("summary medians are not reproducible")
