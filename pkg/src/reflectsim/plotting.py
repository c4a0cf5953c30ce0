"""Matplotlib figures for run directories. Uses the Agg backend only."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import LinearSegmentedColormap  # noqa: E402
from matplotlib.patches import Circle, Rectangle  # noqa: E402

from .artifacts import RAMP_STOPS  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.6),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
}

ALGO_COLORS = {
    "beam_focusing_ma": "#1b7837",
    "beam_focusing_sa": "#2166ac",
    "column_based_ma": "#b2182b",
    "flat": "#999999",
    "none": "#404040",
}


def ramp_cmap():
    lo, hi = RAMP_STOPS[0][0], RAMP_STOPS[-1][0]
    stops = [((db - lo) / (hi - lo), tuple(c / 255 for c in rgb)) for db, rgb in RAMP_STOPS]
    return LinearSegmentedColormap.from_list("reflectsim", stops)


def _save(fig, path) -> Path:
    path = Path(path)
    # no Software tag, so PNG bytes do not depend on the matplotlib build
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def _smooth(y, width):
    if len(y) < width or width < 2:
        return np.asarray(y, dtype=float)
    kernel = np.ones(width) / width
    return np.convolve(y, kernel, mode="valid")


def training_curve(episode_rewards, path, title="", window=25) -> Path:
    """Per-episode reward (mean over agents) with a moving average."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        y = np.asarray(episode_rewards, dtype=float)
        x = np.arange(1, len(y) + 1)
        ax.plot(x, y, color="0.75", lw=0.8, label="episode")
        if len(y) >= window:
            ax.plot(x[window - 1:], _smooth(y, window), color="C0", lw=1.5,
                    label=f"{window}-episode mean")
        ax.set_xlabel("episode")
        ax.set_ylabel("cumulative reward")
        ax.set_title(title)
        if len(y):
            ax.legend(loc="lower right")
        fig.tight_layout()
        return _save(fig, path)


def eval_trace(rows, path, title="") -> Path:
    """Per-user and mean RSSI over an evaluation run."""
    rows = np.asarray(rows, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for k in range(rows.shape[1] - 1):
            ax.plot(rows[:, k], lw=0.8, label=f"user {k}")
        ax.plot(rows[:, -1], color="k", lw=1.5, label="mean")
        ax.set_xlabel("step")
        ax.set_ylabel("RSSI (dBm)")
        ax.set_title(title)
        ax.legend(loc="lower right", ncol=2)
        fig.tight_layout()
        return _save(fig, path)


def heatmap(grid, extent, path, scene=None, users=None, title="") -> Path:
    """RSSI map with wall and obstacle footprints and user markers."""
    lo, hi = RAMP_STOPS[0][0], RAMP_STOPS[-1][0]
    with plt.rc_context({**STYLE, "axes.grid": False, "figure.figsize": (5.0, 5.0)}):
        fig, ax = plt.subplots()
        im = ax.imshow(grid, origin="lower", extent=extent, cmap=ramp_cmap(), vmin=lo, vmax=hi,
                       interpolation="nearest")
        if scene is not None:
            for w in scene.walls:
                ax.add_patch(Rectangle(w.lo[:2], *(w.hi - w.lo)[:2], fc="0.85", ec="0.4", lw=0.5))
            for c in scene.obstacles:
                ax.add_patch(Circle(c.base[:2], c.radius, fc="#8c510a", ec="k", lw=0.5))
            ax.plot(*scene.ap_position[:2], marker="^", color="w", mec="k", ms=7, ls="none")
        if users is not None and len(users):
            users = np.asarray(users)
            ax.plot(users[:, 0], users[:, 1], marker="o", color="w", mec="k", ms=5, ls="none")
        ax.set_xlim(extent[0], extent[1])
        ax.set_ylim(extent[2], extent[3])
        ax.set_xlabel("x (m)")
        ax.set_ylabel("y (m)")
        ax.set_title(title)
        fig.colorbar(im, ax=ax, label="RSSI (dBm)", shrink=0.8)
        fig.tight_layout()
        return _save(fig, path)


def compare_bars(summary, path, title="") -> Path:
    """Mean eval RSSI per arm, seeds as points. ``summary`` maps algo -> list of means."""
    algos = list(summary)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for i, algo in enumerate(algos):
            vals = np.asarray(summary[algo], dtype=float)
            base = -160.0
            ax.bar(i, vals.mean() - base, bottom=base, color=ALGO_COLORS.get(algo, "C0"), alpha=0.8)
            ax.plot(np.full(len(vals), i), vals, "k.", ms=4)
        ax.set_xticks(range(len(algos)), algos, rotation=20, ha="right")
        ax.set_ylabel("mean eval RSSI (dBm)")
        ax.set_title(title)
        fig.tight_layout()
        return _save(fig, path)


def noise_sweep(sigmas, means, path, title="") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(sigmas, means, "o-", color="C0")
        ax.set_xlabel("localization noise sigma (m)")
        ax.set_ylabel("mean eval RSSI (dBm)")
        ax.set_title(title)
        fig.tight_layout()
        return _save(fig, path)
