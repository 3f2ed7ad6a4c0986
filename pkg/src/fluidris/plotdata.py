"""Plain-text plot-data emission: one whitespace-separated file per curve."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .harness import load_summary

FIGURES = ("convergence", "kmn_sweep", "deployment_sweep", "benchmark_bars")


class MissingAxisError(ValueError):
    pass


def _fmt(x) -> str:
    return repr(float(x))


def _write_columns(path: Path, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(" ".join(header) + "\n")
        for row in rows:
            fh.write(" ".join(str(c) if isinstance(c, str) else _fmt(c) for c in row) + "\n")


def _sweep_value(row, key):
    for part in row["sweep_point"].split(","):
        if part.startswith(key + "="):
            return part.split("=", 1)[1]
    return None


def emit_plotdata(outdir, figure: str, dest=None) -> list[Path]:
    """Write curve files for one figure kind; returns the created paths."""
    outdir = Path(outdir)
    dest = Path(dest) if dest is not None else outdir / "plots"
    dest.mkdir(parents=True, exist_ok=True)
    rows = [r for r in load_summary(outdir) if not r["error"]]
    made = []

    if figure == "convergence":
        traces = sorted((outdir / "traces").glob("*.csv"))
        if not traces:
            raise MissingAxisError("no trace files to plot")
        for tpath in traces:
            out = dest / f"convergence_{tpath.stem}.dat"
            with open(tpath, newline="") as fh:
                data = [(int(r["iteration"]), float(r["sum_rate"]))
                        for r in csv.DictReader(fh)]
            _write_columns(out, ["iteration", "sum_rate"], data)
            made.append(out)
        return made

    if figure == "kmn_sweep":
        has_k = any(_sweep_value(r, "k_users") for r in rows)
        if not has_k:
            raise MissingAxisError("kmn_sweep needs a k_users sweep axis")
        combos = sorted({(r["scheme"], _sweep_value(r, "m_ris"), _sweep_value(r, "n_elements"))
                         for r in rows})
        for scheme, m, n in combos:
            sel = [r for r in rows if r["scheme"] == scheme
                   and _sweep_value(r, "m_ris") == m and _sweep_value(r, "n_elements") == n]
            ks = sorted({int(_sweep_value(r, "k_users")) for r in sel})
            data = []
            for k in ks:
                vals = [r["sum_rate"] for r in sel if int(_sweep_value(r, "k_users")) == k]
                data.append((k, float(np.median(vals))))
            label = f"M{m}_N{n}" if m or n else "all"
            out = dest / f"kmn_{scheme}_{label}.dat"
            _write_columns(out, ["k_users", "median_sum_rate"], data)
            made.append(out)
        return made

    if figure == "deployment_sweep":
        if not any(_sweep_value(r, "ris_distance") for r in rows):
            raise MissingAxisError("deployment_sweep needs a ris_distance sweep axis")
        for scheme in sorted({r["scheme"] for r in rows}):
            sel = [r for r in rows if r["scheme"] == scheme]
            ds = sorted({float(_sweep_value(r, "ris_distance")) for r in sel})
            data = []
            for d in ds:
                vals = [r["sum_rate"] for r in sel
                        if float(_sweep_value(r, "ris_distance")) == d]
                data.append((d, float(np.median(vals))))
            out = dest / f"deployment_{scheme}.dat"
            _write_columns(out, ["ris_distance", "median_sum_rate"], data)
            made.append(out)
        return made

    if figure == "benchmark_bars":
        data = []
        for scheme in sorted({r["scheme"] for r in rows}):
            vals = np.array([r["sum_rate"] for r in rows if r["scheme"] == scheme])
            data.append((scheme, float(np.median(vals)),
                         float(np.percentile(vals, 25)), float(np.percentile(vals, 75))))
        out = dest / "benchmark_bars.dat"
        _write_columns(out, ["scheme", "median_rate", "p25", "p75"], data)
        made.append(out)
        return made

    raise ValueError(f"unknown figure {figure!r}; known: {FIGURES}")
