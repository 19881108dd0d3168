"""Figure rendering for result records.

Each study kind gets one matplotlib figure saved next to the delimited
output.  Figures carry fixed metadata (no timestamps), so reruns with the
same config produce identical images up to the matplotlib version.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .reporting import ResultRecord

__all__ = ["render_figure"]

_SAVEFIG_KWARGS = {"dpi": 130, "metadata": {"Software": "stochwave"}}


def _column(record: ResultRecord, name: str, rows=None) -> np.ndarray:
    rows = record.rows if rows is None else rows
    return np.array([row[name] for row in rows if name in row])


def _plot_rate_study(record: ResultRecord, ax, xlabel: str):
    levels = _column(record, "level")
    errors = _column(record, "error")
    ax.loglog(levels, errors, "o-", label="measured error")
    slope = record.summary.get("slope")
    band = record.summary.get("expected_band")
    if slope is not None and np.isfinite(slope) and len(levels) > 1 and np.all(errors > 0):
        anchor = errors[0] * (levels / levels[0]) ** slope
        ax.loglog(levels, anchor, "--", label=f"fit: slope {slope:.3f}")
    if band:
        for edge, style in zip(band, (":", "-.")):
            guide = errors[0] * (levels / levels[0]) ** edge
            ax.loglog(levels, guide, style, color="gray", lw=0.8,
                      label=f"slope {edge:g} guide")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("RMS error in the H$^1$ product norm")
    ax.legend(fontsize=8)
    ax.set_title(f"{record.kind}: {record.summary.get('classification', '')}")


def _plot_contraction(record: ResultRecord, ax):
    pairs = _column(record, "pair")
    rates = _column(record, "rate")
    finite = np.isfinite(rates)
    ax.plot(pairs[finite], rates[finite], "o", label="fitted rate")
    thr = record.summary.get("min_rate_threshold")
    if thr:
        ax.axhline(thr, color="red", ls="--", lw=0.8, label=f"threshold {thr:g}")
    ax.set_xlabel("initial pair index")
    ax.set_ylabel("fitted exponential contraction rate")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.set_title("synchronous-coupling contraction rates")


def _plot_invariant(record: ResultRecord, ax):
    var_rows = [r for r in record.rows if r["quantity"].startswith("var_")]
    measured = np.array([r["measured"] for r in var_rows])
    expected = np.array([r["expected"] for r in var_rows])
    ax.loglog(expected, measured, "o", ms=4, label="per-mode variances")
    lims = (min(expected.min(), measured.min()), max(expected.max(), measured.max()))
    ax.loglog(lims, lims, "k--", lw=0.8, label="measured = expected")
    ax.set_xlabel("stationary-law value")
    ax.set_ylabel("time average")
    ax.legend(fontsize=8)
    err = record.summary.get("max_norm_rel_error", float("nan"))
    ax.set_title(f"invariant check (worst norm rel. error {err:.2%})")


def _plot_simulate(record: ResultRecord, ax):
    t = _column(record, "t")
    for name in record.columns:
        if name in ("step", "t"):
            continue
        ax.plot(t, _column(record, name), label=name, lw=0.9)
    ax.set_xlabel("t")
    ax.set_ylabel("observable")
    ax.legend(fontsize=8)
    ax.set_title("trajectory observables")


def _plot_audit(record: ResultRecord, ax):
    names = [r["quantity"] for r in record.rows]
    values = [r["value"] for r in record.rows]
    colors = ["tab:green" if r["passed"] else "tab:red" for r in record.rows]
    ax.barh(names, values, color=colors)
    ax.set_xlabel("measured value")
    ax.set_title(f"assumption audit: {'pass' if record.summary.get('passed') else 'FAIL'}")


def render_figure(record: ResultRecord, path: str):
    """Render the record's standard figure to ``path`` (PNG)."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    try:
        if record.kind == "converge-time":
            _plot_rate_study(record, ax, "time step tau")
        elif record.kind == "converge-space":
            _plot_rate_study(record, ax, "Galerkin modes N")
        elif record.kind == "slln":
            _plot_rate_study(record, ax, "averaging horizon t")
        elif record.kind == "contraction":
            _plot_contraction(record, ax)
        elif record.kind == "invariant-check":
            _plot_invariant(record, ax)
        elif record.kind == "simulate":
            _plot_simulate(record, ax)
        elif record.kind == "audit-model":
            _plot_audit(record, ax)
        else:
            ax.text(0.5, 0.5, f"no figure for kind {record.kind!r}",
                    ha="center", va="center")
        fig.tight_layout()
        fig.savefig(path, **_SAVEFIG_KWARGS)
    finally:
        plt.close(fig)
