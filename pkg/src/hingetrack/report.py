"""Figure rendering for the CLI: every command that writes CSV data also
renders a matching PNG so results can be inspected without extra tooling.

All plotting is headless (Agg backend); functions take plain arrays and a
target path and return the path written.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_rates(t, w_i, w_j, w_k, path):
    """True body rates of the three segments, one panel per segment."""
    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(8, 7))
    for ax, rates, label in zip(axes, (w_i, w_j, w_k), ("segment i", "segment j", "segment k")):
        rates = np.rad2deg(np.asarray(rates))
        for axis_idx, axis_name in enumerate("xyz"):
            ax.plot(t, rates[:, axis_idx], label=axis_name, linewidth=0.9)
        ax.set_ylabel(f"{label}\n[deg/s]")
        ax.grid(alpha=0.3)
    axes[0].legend(loc="upper right", ncol=3, fontsize=8)
    axes[-1].set_xlabel("time [s]")
    fig.suptitle("true angular rates")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_projections(t, w_perp, w_nonperp, w_li, w_lk, observable, path):
    """Characteristic rate projections with the observability verdict."""
    fig, (ax, axv) = plt.subplots(
        2, 1, sharex=True, figsize=(8, 5), height_ratios=[3, 1]
    )
    ax.plot(t, np.rad2deg(w_perp), label="middle rate along l_perp", linewidth=1.0)
    ax.plot(t, np.rad2deg(w_nonperp), label="middle rate complement", linewidth=1.0)
    ax.plot(t, np.rad2deg(w_li), label="joint rate i", linewidth=0.8, alpha=0.7)
    ax.plot(t, np.rad2deg(w_lk), label="joint rate k", linewidth=0.8, alpha=0.7)
    ax.axhline(0.0, color="k", linewidth=0.5)
    ax.set_ylabel("projected rate [deg/s]")
    ax.legend(loc="upper right", fontsize=8)
    ax.grid(alpha=0.3)
    observable = np.asarray(observable, dtype=bool)
    axv.fill_between(t, 0, 1, where=observable, step="mid",
                     color="tab:green", alpha=0.6, label="observable")
    axv.fill_between(t, 0, 1, where=~observable, step="mid",
                     color="tab:red", alpha=0.6, label="not observable")
    axv.set_yticks([])
    axv.set_xlabel("time [s]")
    axv.legend(loc="upper right", fontsize=8, ncol=2)
    fig.suptitle("rate projections and per-instant observability")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_errors(t, phi_ji_deg, phi_ki_deg, path, reference_deg=4.0):
    """Relative-orientation error curves with the accuracy reference line."""
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(t, phi_ji_deg, label="error i-j", linewidth=1.0)
    ax.plot(t, phi_ki_deg, label="error i-k", linewidth=1.0)
    if reference_deg is not None:
        ax.axhline(reference_deg, color="k", linestyle="--", linewidth=0.8,
                   label=f"{reference_deg:g} deg reference")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("angular distance [deg]")
    ax.set_ylim(bottom=0.0)
    ax.legend(loc="upper right", fontsize=8)
    ax.grid(alpha=0.3)
    fig.suptitle("relative orientation estimation error")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_criteria_summary(results, path):
    """Horizontal pass/fail bar chart, one row per acceptance criterion.

    results: list of dicts with keys 'criterion', 'passed', 'detail'.
    """
    n = len(results)
    fig, ax = plt.subplots(figsize=(8, 0.6 * n + 1.2))
    labels = [f"{r['criterion']}: {r['detail']}" for r in results]
    colors = ["tab:green" if r["passed"] else "tab:red" for r in results]
    ax.barh(range(n), [1.0] * n, color=colors, alpha=0.8)
    for idx, label in enumerate(labels):
        ax.text(0.01, idx, label, va="center", fontsize=8)
    ax.set_yticks([])
    ax.set_xticks([])
    ax.set_xlim(0, 1)
    ax.invert_yaxis()
    fig.suptitle("acceptance criteria")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
