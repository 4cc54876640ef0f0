"""Matplotlib rendering of the standard report figures.

Figures accompany the delimited plot-data files: same four views, rendered
to PNG with the non-interactive Agg backend so report generation works
headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams.update({
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 9,
})


def _finite_positive(xs, ys):
    pairs = [(x, y) for x, y in zip(xs, ys) if y == y and y > 0]
    if not pairs:
        return [], []
    return zip(*pairs)


def render_figures(records_by_label: dict[str, list], out_dir) -> list[Path]:
    """Render gap, stepsize, batch-size, and budget figures to PNG files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    fig, ax = plt.subplots()
    for label, recs in records_by_label.items():
        ks, gaps = _finite_positive([r.k for r in recs], [r.gap for r in recs])
        if ks:
            ax.loglog(ks, gaps, label=label)
    ax.set_xlabel("iteration k")
    ax.set_ylabel("optimality gap")
    ax.legend()
    fig.tight_layout()
    p = out / "gap_vs_k.png"
    fig.savefig(p)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots()
    for label, recs in records_by_label.items():
        ax.plot([r.k for r in recs], [r.eta for r in recs], label=label)
    ax.set_xlabel("iteration k")
    ax.set_ylabel("stepsize")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    p = out / "eta_vs_k.png"
    fig.savefig(p)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots()
    for label, recs in records_by_label.items():
        ax.step([r.k for r in recs], [r.m for r in recs], label=f"m {label}")
        ax.step([r.k for r in recs], [r.n for r in recs], label=f"n {label}", linestyle="--")
    ax.set_xlabel("iteration k")
    ax.set_ylabel("mini-batch size")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    p = out / "batch_sizes_vs_k.png"
    fig.savefig(p)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots()
    for label, recs in records_by_label.items():
        calls, gaps = _finite_positive([r.calls_total for r in recs], [r.gap for r in recs])
        if calls:
            ax.loglog(calls, gaps, label=label)
    ax.set_xlabel("cumulative oracle calls")
    ax.set_ylabel("optimality gap")
    ax.legend()
    fig.tight_layout()
    p = out / "calls_vs_gap.png"
    fig.savefig(p)
    plt.close(fig)
    paths.append(p)
    return paths
