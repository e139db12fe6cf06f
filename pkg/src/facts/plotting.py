"""Report figures, written to files with the non-interactive backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

STYLE = {
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "axes.grid": True,
    "grid.linestyle": ":",
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "figure.figsize": (4.8, 3.2),
    "savefig.dpi": 150,
}


def _save(fig, path) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def plot_bench(rows: list[dict], path) -> str:
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
        t = [r["t"] for r in rows]
        ax1.loglog(t, [r["seq_ms"] for r in rows], "o-", label="sequential")
        ax1.loglog(t, [r["par_ms"] for r in rows], "s-", label="parallel")
        ax1.set_xlabel("sequence length t")
        ax1.set_ylabel("wall time (ms)")
        ax1.legend()
        ax2.semilogx(t, [r["speedup"] for r in rows], "o-", color="k")
        ax2.axhline(1.0, color="grey", lw=0.8)
        ax2.set_xlabel("sequence length t")
        ax2.set_ylabel("speedup (seq / par)")
        return _save(fig, path)


def plot_permutation(report: dict, path) -> str:
    """Per-seed MSE under variate permutation against the unpermuted value."""
    perm = report["permutation"]
    seeds = [r["seed"] for r in perm["runs"]]
    mse = np.array([r["mse"] for r in perm["runs"]])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        x = np.arange(len(seeds))
        ax.plot(x, mse, "o", label="permuted")
        ax.axhline(report["metrics"]["mse"], color="k", lw=0.8, label="unpermuted")
        lo, hi = perm["mse_mean"] - 2 * perm["mse_std"], perm["mse_mean"] + 2 * perm["mse_std"]
        ax.axhspan(lo, hi, color="C0", alpha=0.15, label="mean +/- 2 std")
        ax.set_xticks(x, [str(s) for s in seeds])
        ax.set_xlabel("permutation seed")
        ax.set_ylabel(f"test MSE ({report['scale']})")
        ax.ticklabel_format(axis="y", useOffset=False)
        ax.legend()
        return _save(fig, path)


def plot_training(history: dict, path) -> str:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        loss = np.asarray(history.get("step_loss", []))
        if loss.size:
            ax.plot(np.arange(1, loss.size + 1), loss, lw=0.6, alpha=0.5, label="train loss (step)")
        val = history.get("epoch_val_mse", [])
        steps = history.get("epoch_end_step", list(range(len(val))))
        if val:
            ax.plot(steps, val, "o-", label="validation MSE (epoch)")
        ax.set_xlabel("optimizer step")
        ax.set_ylabel("MSE (normalized)")
        ax.legend()
        return _save(fig, path)
