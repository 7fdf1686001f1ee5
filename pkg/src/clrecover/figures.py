"""Figure rendering for sweep outputs: measured error curves with optional
bound overlays, written as PNG files next to the delimited outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .harness import Table


def _series(table: Table, ycol: str):
    xs, ys, errs = [], [], []
    for row in table.select(kind="agg"):
        v = row.get(ycol)
        if v in (None, ""):
            continue
        xs.append(float(row["axis_value"]))
        ys.append(float(v))
        se = row.get("err_se")
        errs.append(float(se) if se not in (None, "") else 0.0)
    return xs, ys, errs


def render_sweep_figure(table: Table, path: str, title: str | None = None) -> str:
    """One log-log panel: measured weighted error (with standard-error bars)
    and, when present, the theorem bound overlay."""
    xs, ys, errs = _series(table, "err_weighted")
    if not xs:
        raise ValueError("table has no aggregate rows to plot")
    axis = table.rows[0].get("axis", "axis") if table.rows else "axis"

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.errorbar(xs, ys, yerr=errs, marker="o", capsize=3, label="measured")
    bx, by, _ = _series(table, "bound_value")
    if bx:
        ax.plot(bx, by, marker="s", linestyle="--", label="bound")
    positive = all(v > 0 for v in xs) and all(v > 0 for v in ys)
    if positive:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(str(axis))
    ax.set_ylabel("weighted estimation error")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
