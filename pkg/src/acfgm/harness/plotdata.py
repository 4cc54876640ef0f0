"""Plot-data emission (tab-separated series files) and log-log rate fitting."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def rate_fit(ks, gaps, window: float = 0.5):
    """Least-squares slope of log(gap) vs log(k) over the trailing window.

    Returns None (fit skipped) when the window holds fewer than 10 points or
    any gap in it is nonpositive.
    """
    if not 0 < window <= 1:
        raise ValueError("window must lie in (0, 1]")
    n = len(ks)
    start = n - max(int(math.ceil(n * window)), 0)
    ks_w = np.asarray(ks[start:], dtype=np.float64)
    gaps_w = np.asarray(gaps[start:], dtype=np.float64)
    if ks_w.shape[0] < 10:
        return None
    if np.any(~np.isfinite(gaps_w)) or np.any(gaps_w <= 0):
        return None
    lx = np.log(ks_w)
    ly = np.log(gaps_w)
    lx = lx - lx.mean()
    return float(np.dot(lx, ly - ly.mean()) / np.dot(lx, lx))


def _write_tsv(path: Path, description: str, header: list[str], rows) -> Path:
    lines = [f"# {description}", "\t".join(header)]
    for row in rows:
        lines.append("\t".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def emit_plotdata(records_by_label: dict[str, list], out_dir) -> list[Path]:
    """Write the four standard series files for one run or a comparison.

    Labels become column series; rows are aligned on the iteration counter.
    The oracle-call file pairs (calls, gap) columns per label because its x
    axis differs across runs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = list(records_by_label)
    by_k: dict[int, dict[str, object]] = {}
    for label, records in records_by_label.items():
        for rec in records:
            by_k.setdefault(rec.k, {})[label] = rec
    ks = sorted(by_k)

    def series(field: str) -> list[list]:
        rows = []
        for k in ks:
            row: list = [k]
            for label in labels:
                rec = by_k[k].get(label)
                row.append(getattr(rec, field) if rec is not None else float("nan"))
            rows.append(row)
        return rows

    paths = []
    paths.append(_write_tsv(
        out / "gap_vs_k.tsv",
        "optimality gap vs iteration (plot on log-log axes)",
        ["k"] + labels, series("gap"),
    ))
    paths.append(_write_tsv(
        out / "eta_vs_k.tsv",
        "stepsize vs iteration",
        ["k"] + labels, series("eta"),
    ))
    m_rows = []
    header_mn = ["k"]
    for label in labels:
        header_mn += [f"m:{label}", f"n:{label}"]
    for k in ks:
        row: list = [k]
        for label in labels:
            rec = by_k[k].get(label)
            row += [rec.m if rec else 0, rec.n if rec else 0]
        m_rows.append(row)
    paths.append(_write_tsv(
        out / "batch_sizes_vs_k.tsv",
        "main (m) and stepsize (n) mini-batch sizes vs iteration",
        header_mn, m_rows,
    ))
    calls_rows = []
    max_len = max(len(r) for r in records_by_label.values())
    header_cg = []
    for label in labels:
        header_cg += [f"calls:{label}", f"gap:{label}"]
    for i in range(max_len):
        row = []
        for label in labels:
            recs = records_by_label[label]
            if i < len(recs):
                row += [recs[i].calls_total, recs[i].gap]
            else:
                row += [float("nan"), float("nan")]
        calls_rows.append(row)
    paths.append(_write_tsv(
        out / "calls_vs_gap.tsv",
        "cumulative oracle calls vs optimality gap",
        header_cg, calls_rows,
    ))
    return paths
