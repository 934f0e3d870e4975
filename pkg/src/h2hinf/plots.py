"""Figure rendering for the report artifacts.

Every figure is written next to its CSV with date metadata suppressed so
repeated runs produce byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_figure(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Date": None})
    plt.close(fig)


def pole_sweep_figure(sweep, gamma_target, path) -> None:
    """Norm-vs-pole trade-off curve from the admissible-gain search."""
    poles = [p for p, _, _ in sweep]
    norms = [n for _, _, n in sweep]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(poles, norms, "o-", label="closed-loop norm")
    ax.axhline(gamma_target, color="red", linestyle="--", label=f"target γ = {gamma_target:g}")
    ax.set_xlabel("placed pole")
    ax.set_ylabel("H∞ norm")
    ax.grid(True, which="both", alpha=0.4)
    ax.legend()
    save_figure(fig, path)


def learning_history_figure(history, path) -> None:
    """Relative estimation errors of the value and gain per iterate."""
    fig, ax = plt.subplots(figsize=(6, 4))
    steps = np.arange(1, len(history) + 1)
    if history and "rel_err_P" in history[0]:
        ax.semilogy(steps, [rec["rel_err_P"] for rec in history], "o-", label="rel. error P")
        ax.semilogy(steps, [rec["rel_err_K"] for rec in history], "s--", label="rel. error K")
        ax.set_ylabel("relative error")
    else:
        ax.semilogy(steps, [rec["residual"] for rec in history], "o-", label="lsq residual")
        ax.set_ylabel("residual")
    ax.set_xlabel("iterate")
    ax.grid(True, which="both", alpha=0.4)
    ax.legend()
    save_figure(fig, path)


def trajectory_figure(traj, path, state_labels=None, offset=None) -> None:
    """States and inputs of one simulated run."""
    n = traj.states.shape[1]
    m = traj.inputs.shape[1]
    fig, axes = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    shift = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    for i in range(n):
        label = state_labels[i] if state_labels else f"x{i + 1}"
        axes[0].plot(traj.times, traj.states[:, i] + shift[i], label=label, linewidth=0.9)
    axes[0].set_ylabel("state")
    axes[0].legend()
    axes[0].grid(True, alpha=0.4)
    for j in range(m):
        axes[1].plot(traj.times, traj.inputs[:, j], label=f"u{j + 1}", linewidth=0.9)
    axes[1].set_xlabel("time (s)")
    axes[1].set_ylabel("input")
    axes[1].legend()
    axes[1].grid(True, alpha=0.4)
    save_figure(fig, path)


def identification_figure(times, measured, predicted, path) -> None:
    """Free-run prediction against held-out data plus residuals."""
    fig, axes = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    axes[0].plot(times, measured, label="measured", linewidth=0.9)
    axes[0].plot(times, predicted, "--", label="free-run prediction", linewidth=0.9)
    axes[0].set_ylabel("output")
    axes[0].legend()
    axes[0].grid(True, alpha=0.4)
    axes[1].plot(times, np.asarray(predicted) - np.asarray(measured), linewidth=0.9, color="tab:red")
    axes[1].set_xlabel("time (s)")
    axes[1].set_ylabel("residual")
    axes[1].grid(True, alpha=0.4)
    save_figure(fig, path)


def iteration_figure(records, path) -> None:
    """Model-based solver convergence: gain increments and GARE residuals."""
    fig, ax = plt.subplots(figsize=(6, 4))
    steps = np.arange(1, len(records) + 1)
    eps = 1e-300
    ax.semilogy(steps, [rec["dK"] + eps for rec in records], "o-", label="‖ΔK‖")
    ax.semilogy(steps, [rec["residual"] + eps for rec in records], "s--", label="GARE residual")
    ax.set_xlabel("iterate")
    ax.set_ylabel("magnitude")
    ax.grid(True, which="both", alpha=0.4)
    ax.legend()
    save_figure(fig, path)
