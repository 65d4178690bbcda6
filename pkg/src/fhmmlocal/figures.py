"""Figure rendering for the CLI report paths.

Every function takes already-computed report data and writes one PNG next to
the delimited output.  Figures are a convenience view; the CSV files remain
the canonical artifacts.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .em import EmTraceRow
from .forecast import MeanSeries
from .model import ObservationSequence

_DPI = 140


def _new_axes(title: str, xlabel: str, ylabel: str):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig, path: str) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_ltv_figure(rows: list[tuple[int, int, str, float]], path: str) -> None:
    """Local accuracy over time, one panel per mode, one line per variable."""
    modes = sorted({mode for _, _, mode, _ in rows})
    fig, axes = plt.subplots(1, max(len(modes), 1), figsize=(6.4 * max(len(modes), 1), 4.0), squeeze=False)
    for ax, mode in zip(axes[0], modes):
        by_var: dict[int, list[tuple[int, float]]] = {}
        for t, v, row_mode, value in rows:
            if row_mode == mode:
                by_var.setdefault(v, []).append((t, value))
        any_positive = False
        for v, series in sorted(by_var.items()):
            series.sort()
            any_positive = any_positive or any(x > 0 for _, x in series)
            ax.plot([t for t, _ in series], [x for _, x in series], lw=1.0, label=f"v{v}")
        if any_positive:
            ax.set_yscale("log")
        ax.set_title(f"local TV to exact ({mode})")
        ax.set_xlabel("t")
        ax.set_ylabel("total variation")
        ax.grid(True, alpha=0.3)
        if len(by_var) <= 12:
            ax.legend(fontsize=7, ncol=2)
    _save(fig, path)


def render_bench_figure(rows: list[dict], path: str) -> None:
    """Wall-clock seconds against the number of variables, one line per radius."""
    fig, ax = _new_axes("runtime scaling", "number of variables M", "seconds")
    radii = sorted({row["m"] for row in rows})
    for m in radii:
        pts = sorted((row["M"], row["seconds"]) for row in rows if row["m"] == m)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"m={m}")
    exact_pts = sorted(
        (row["M"], row["seconds_exact"]) for row in rows if row.get("seconds_exact") is not None
    )
    if exact_pts:
        ax.plot(
            [p[0] for p in exact_pts],
            [p[1] for p in exact_pts],
            marker="s",
            ls="--",
            color="k",
            label="exact",
        )
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    _save(fig, path)


def render_em_trace_figure(trace: list[EmTraceRow], path: str) -> None:
    """Parameter and surrogate trajectories across EM iterations."""
    iters = [row.iteration for row in trace]
    fig, axes = plt.subplots(2, 2, figsize=(9.6, 7.0))
    ax = axes[0, 0]
    ax.plot(iters, [row.c_hat for row in trace], label="scale")
    ax.plot(iters, [row.sigma2_hat for row in trace], label="variance")
    ax.set_title("emission parameters")
    ax.legend(fontsize=8)
    ax = axes[0, 1]
    L = trace[0].p_hat.shape[0]
    for x in range(L):
        for z in range(L):
            ax.plot(iters, [row.p_hat[x, z] for row in trace], lw=1.0, label=f"p[{x},{z}]")
    ax.set_title("transition entries")
    if L <= 3:
        ax.legend(fontsize=7, ncol=L)
    ax = axes[1, 0]
    for x in range(L):
        ax.plot(iters, [row.mu0_hat[x] for row in trace], label=f"mu0[{x}]")
    ax.set_title("initial law")
    ax.legend(fontsize=8)
    ax = axes[1, 1]
    ax.plot(iters, [row.surrogate_log_likelihood for row in trace], color="k")
    ax.set_title("surrogate log-likelihood")
    for ax in axes.ravel():
        ax.set_xlabel("iteration")
        ax.grid(True, alpha=0.3)
    _save(fig, path)


def render_mean_series_figure(
    series: MeanSeries, obs: ObservationSequence | None, path: str, max_panels: int = 4
) -> None:
    """Expected observation paths with the observed values overlaid."""
    F = series.values.shape[1]
    shown = list(range(min(F, max_panels)))
    fig, axes = plt.subplots(len(shown), 1, figsize=(7.2, 2.4 * len(shown)), squeeze=False, sharex=True)
    for ax, f in zip(axes[:, 0], shown):
        ax.plot(series.times, series.values[:, f], color="C0", lw=1.2, label=series.kind)
        if obs is not None:
            ts = [int(t) for t in series.times if 1 <= t <= obs.length]
            ax.plot(ts, [obs.values[t - 1, f] for t in ts], color="C3", lw=0.7, alpha=0.6, label="observed")
        ax.set_ylabel(f"f{f}")
        ax.grid(True, alpha=0.3)
        if f == shown[0]:
            ax.legend(fontsize=8, loc="upper right")
    axes[-1, 0].set_xlabel("t")
    _save(fig, path)


def render_marginals_figure(marginal_paths: np.ndarray, path: str, title: str) -> None:
    """Heat map of one state's marginal probability across variables and time."""
    fig, ax = _new_axes(title, "t", "variable")
    im = ax.imshow(marginal_paths, aspect="auto", origin="lower", cmap="viridis", vmin=0.0, vmax=1.0)
    fig.colorbar(im, ax=ax, shrink=0.85)
    _save(fig, path)
