"""Command-line entry points: run, sweep, compare, replay."""

from __future__ import annotations

import argparse
import sys

from . import plotdata
from .baselines import BaselineSpec
from .harness import SCHEMES, ExperimentPlan, load_summary, replay, run
from .scenario import ScenarioConfig, load_scenario

ABLATIONS = {
    "--no-fa": "altopt_no_fa",
    "--no-uav": "altopt_no_uav",
    "--no-ris": "altopt_no_ris",
    "--no-bf": "altopt_no_bf",
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="scenario config file (YAML); defaults built in")
    p.add_argument("--seeds", default="0", help="comma list or a-b range, e.g. 0-49")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--schemes", default="altopt",
                   help=f"comma list from: {','.join(sorted(SCHEMES))}")
    p.add_argument("--budget", type=int, default=2000, help="black-box search budget")
    for flag, scheme in ABLATIONS.items():
        p.add_argument(flag, action="store_true",
                       help=f"also run the {scheme} ablation")
    p.add_argument("--half-fa", action="store_true",
                   help="also run with half the elements frozen")
    p.add_argument("--plot", choices=plotdata.FIGURES, action="append", default=[],
                   help="emit plot-data files after the run (repeatable)")


def _parse_seeds(text: str) -> list[int]:
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            seeds.extend(range(int(a), int(b) + 1))
        else:
            seeds.append(int(part))
    return seeds


def _parse_sweep(items: list[str]) -> dict:
    sweep = {}
    for item in items or []:
        key, _, values = item.partition("=")
        if not values:
            raise SystemExit(f"bad sweep spec {item!r}; expected key=v1,v2,...")
        parsed = []
        for v in values.split(","):
            try:
                parsed.append(int(v))
            except ValueError:
                parsed.append(float(v))
        sweep[key.strip()] = parsed
    return sweep


def _build_plan(args, sweep=None) -> ExperimentPlan:
    cfg = load_scenario(args.config) if args.config else ScenarioConfig()
    schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
    for flag, scheme in ABLATIONS.items():
        if getattr(args, flag.lstrip("-").replace("-", "_")) and scheme not in schemes:
            schemes.append(scheme)
    if args.half_fa and "altopt_half_fa" not in schemes:
        schemes.append("altopt_half_fa")
    return ExperimentPlan(
        config=cfg,
        schemes=schemes,
        seeds=_parse_seeds(args.seeds),
        outdir=args.out,
        sweep=sweep or {},
        baseline=BaselineSpec(budget=args.budget),
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fluidris",
        description="Experiments for surface-assisted movable-antenna relay networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run schemes over seeds on one scenario")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="run over a grid of scenario overrides")
    _add_common(p_sweep)
    p_sweep.add_argument("--axis", action="append", default=[],
                         help="sweep axis, e.g. --axis k_users=2,4 (repeatable)")

    p_cmp = sub.add_parser("compare", help="run the benchmark set and emit bars")
    _add_common(p_cmp)

    p_replay = sub.add_parser("replay", help="re-run an experiment from its manifest")
    p_replay.add_argument("manifest")
    p_replay.add_argument("--out", required=True)

    args = parser.parse_args(argv)

    if args.command == "replay":
        outdir = replay(args.manifest, args.out)
        print(f"replayed into {outdir}")
        return 0

    sweep = _parse_sweep(args.axis) if args.command == "sweep" else {}
    plan = _build_plan(args, sweep)
    if args.command == "compare" and "benchmark_bars" not in args.plot:
        args.plot.append("benchmark_bars")
    outdir = run(plan)
    failed = sum(1 for r in load_summary(outdir) if r["error"])
    print(f"wrote {outdir} ({failed} failed rows)")
    for fig in args.plot:
        paths = plotdata.emit_plotdata(outdir, fig)
        print(f"{fig}: {len(paths)} file(s)")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
