"""Matplotlib figure rendering for run, sweep, detect, and oracle outputs.

Figures are built on explicit Figure objects with the Agg canvas so nothing
touches pyplot's global state or needs a display.
"""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure


def _save(fig: Figure, path) -> None:
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=130)


def _log_safe(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return np.where(v > 0, v, np.nan)


def trial_figure(record, path) -> None:
    """PSNR trace over variance trace, with detected/stop iterations marked."""
    fig = Figure(figsize=(7.0, 5.0), constrained_layout=True)
    ax_psnr, ax_var = fig.subplots(2, 1, sharex=True)
    iters = np.asarray(list(record.iterations()))
    ax_psnr.plot(iters, record.psnr_trace, color="tab:blue", lw=1.0)
    ax_psnr.set_ylabel("PSNR to truth (dB)")
    v = record.verdict
    for ax in (ax_psnr, ax_var):
        ax.axvline(v.best_iteration, color="tab:green", ls="--", lw=1.0,
                   label=f"detected ({v.best_iteration})")
        ax.axvline(v.stop_iteration, color="tab:red", ls=":", lw=1.0,
                   label=f"stopped ({v.stop_iteration})")
    if v.variance_trace:
        vt = np.asarray(v.variance_trace)
        ax_var.plot(vt[:, 0], _log_safe(vt[:, 1]), color="tab:orange", lw=1.0)
        ax_var.set_yscale("log")
    ax_var.set_ylabel("window variance")
    ax_var.set_xlabel("iteration")
    ax_psnr.legend(loc="lower right", fontsize=8)
    ax_psnr.set_title(f"trial {record.trial}: psnr_gap = {record.psnr_gap:.3f} dB")
    _save(fig, path)


def detect_figure(verdict, path) -> None:
    """Variance trace of a replayed stream with min/stop markers."""
    fig = Figure(figsize=(7.0, 3.5), constrained_layout=True)
    ax = fig.subplots()
    if verdict.variance_trace:
        vt = np.asarray(verdict.variance_trace)
        ax.plot(vt[:, 0], _log_safe(vt[:, 1]), color="tab:orange", lw=1.0)
        ax.set_yscale("log")
    ax.axvline(verdict.best_iteration, color="tab:green", ls="--", lw=1.0,
               label=f"minimum ({verdict.best_iteration})")
    ax.axvline(verdict.stop_iteration, color="tab:red", ls=":", lw=1.0,
               label=f"stopped ({verdict.stop_iteration})")
    ax.set_xlabel("iteration")
    ax.set_ylabel("variance")
    ax.legend(loc="best", fontsize=8)
    _save(fig, path)


def sweep_figure(rows, axis: str, path) -> None:
    """psnr_gap per trial against the swept value."""
    fig = Figure(figsize=(6.0, 4.0), constrained_layout=True)
    ax = fig.subplots()
    values = []
    for _, value, *_ in rows:
        if value not in values:
            values.append(value)
    pos = {v: i for i, v in enumerate(values)}
    xs = [pos[r[1]] for r in rows]
    gaps = [r[5] for r in rows]
    ax.plot(xs, gaps, "o", color="tab:blue", alpha=0.6, label="trial")
    means = [float(np.mean([r[5] for r in rows if r[1] == v])) for v in values]
    ax.plot(range(len(values)), means, "-", color="tab:red", label="mean")
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels([str(v) for v in values])
    ax.set_xlabel(axis)
    ax.set_ylabel("psnr_gap (dB)")
    ax.legend(loc="best", fontsize=8)
    _save(fig, path)


def oracle_figure(rows, path) -> None:
    """Closed-form vs simulated windowed variance on a log scale."""
    fig = Figure(figsize=(6.0, 4.0), constrained_layout=True)
    ax = fig.subplots()
    ts = [r[0] for r in rows]
    ax.plot(ts, _log_safe([r[1] for r in rows]), "-", color="tab:blue",
            lw=1.5, label="closed form")
    ax.plot(ts, _log_safe([r[2] for r in rows]), "--", color="tab:orange",
            lw=1.5, label="simulated")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("windowed variance")
    ax.legend(loc="best", fontsize=8)
    _save(fig, path)
