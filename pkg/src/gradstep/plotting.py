"""Figure rendering for trajectories, improvement factors, and check reports.

Uses the non-interactive Agg backend so figures render in headless
environments; every helper writes a PNG file and returns its path.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_convergence(series, path, title="", ylabel="dist_sq"):
    """series: iterable of (label, xs, ys). Log y-scale when every finite
    value is positive."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    log_ok = True
    for label, xs, ys in series:
        ys = np.asarray(ys, dtype=np.float64)
        finite = ys[np.isfinite(ys)]
        if finite.size and not np.all(finite > 0.0):
            log_ok = False
        ax.plot(xs, ys, label=label, linewidth=1.4)
    if log_ok:
        ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_improvement(iters, factors, path, title="step improvement over constant GD"):
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(iters, factors, linewidth=1.4, color="tab:green")
    ax.axhline(1.0, color="gray", linestyle="--", linewidth=1.0)
    ax.set_xlabel("iteration")
    ax.set_ylabel("factor")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_report(rows, path, title="check report"):
    """One panel per check name: lhs and rhs against the step/seed column."""
    names = []
    for r in rows:
        if r.check not in names:
            names.append(r.check)
    count = max(len(names), 1)
    fig, axes = plt.subplots(count, 1, figsize=(6.4, 3.0 * count), squeeze=False)
    for ax, name in zip(axes[:, 0], names):
        group = [r for r in rows if r.check == name]
        xs = [r.step_or_seed for r in group]
        ax.plot(xs, [r.lhs for r in group], "o-", markersize=3, label="observed", linewidth=1.0)
        ax.plot(xs, [r.rhs for r in group], "s--", markersize=3, label="bound", linewidth=1.0)
        lhs_pos = all(r.lhs > 0 for r in group)
        rhs_pos = all(r.rhs > 0 for r in group)
        if lhs_pos and rhs_pos:
            ax.set_yscale("log")
        ax.set_title(name, fontsize=9)
        ax.legend(fontsize=7)
        ax.grid(True, alpha=0.3)
    if not rows:
        axes[0, 0].set_title("no checks")
    fig.suptitle(title, fontsize=11)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
