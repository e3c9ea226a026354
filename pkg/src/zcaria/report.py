"""CSV tables and matplotlib figures for plans, calibration runs and attacks."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy import stats as sps  # noqa: E402

from .attack import AttackPlan, AttackResult, ErrorRates  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 120,
}


def _figure(width=5.0, height=3.2):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, height))
    return fig, ax


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        fig.tight_layout()
        fig.savefig(path)
    plt.close(fig)
    return path


# -- plans ----------------------------------------------------------------------------

PLAN_COLUMNS = ["variant", "rounds", "log2_data", "log2_tau", "log2_time", "log2_memory_bytes", "guessed_key_bits"]


def write_plan_csv(plans: list[AttackPlan], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PLAN_COLUMNS)
        for p in plans:
            d = p.to_dict()
            w.writerow([d["variant"], d["rounds"]] + [f"{d[c]:.4f}" for c in PLAN_COLUMNS[2:6]] + [d["guessed_key_bits"]])
    return path


def write_plan_steps_csv(plans: list[AttackPlan], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "step", "log2_cost", "unit", "detail"])
        for p in plans:
            for s in p.steps:
                w.writerow([p.variant, s.label, f"{s.log2_cost:.4f}", s.unit, s.detail])
    return path


def plot_plan_steps(plans: list[AttackPlan], path) -> Path:
    """Per-step log2 cost for each variant, with the total as a dashed line."""
    fig, axes = plt.subplots(1, len(plans), figsize=(2.6 * len(plans), 3.0), sharey=False)
    axes = np.atleast_1d(axes)
    for ax, p in zip(axes, plans):
        labels = [s.label for s in p.steps]
        ax.bar(range(len(labels)), [s.log2_cost for s in p.steps], color="0.55")
        ax.axhline(p.log2_time, ls="--", lw=0.8, color="k")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, fontsize=7)
        ax.set_title(p.variant, fontsize=9)
        ax.set_xlabel("step")
        lo = min(s.log2_cost for s in p.steps)
        ax.set_ylim(lo - 5, p.log2_time + 3)
    axes[0].set_ylabel("log2 cost")
    return _save(fig, path)


# -- calibration ----------------------------------------------------------------------


def write_calibration_csv(rates: ErrorRates, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "T_balanced", "T_random"])
        for i, (a, b) in enumerate(zip(rates.right_T, rates.wrong_T)):
            w.writerow([i, f"{a:.6f}", f"{b:.6f}"])
    return path


def plot_calibration(rates: ErrorRates, path) -> Path:
    """Histograms of T for both sources against the scaled chi-square models."""
    fig, ax = _figure()
    p = rates.params
    dof = p.mu1
    hi = max(rates.right_T.max(), rates.wrong_T.max())
    bins = np.linspace(0, hi, 40)
    ax.hist(rates.right_T, bins=bins, density=True, alpha=0.5, color="tab:blue", label="balanced source")
    ax.hist(rates.wrong_T, bins=bins, density=True, alpha=0.5, color="tab:orange", label="random source")
    x = np.linspace(1e-3, hi, 300)
    scale = p.mu0 / dof
    ax.plot(x, sps.chi2.pdf(x / scale, dof) / scale, color="tab:blue", lw=1)
    ax.plot(x, sps.chi2.pdf(x, dof), color="tab:orange", lw=1)
    ax.axvline(rates.tau, color="k", ls="--", lw=0.8, label=f"tau = {rates.tau:.2f}")
    ax.set_xlabel("T")
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    return _save(fig, path)


# -- attacks --------------------------------------------------------------------------


def write_attack_csv(result: AttackResult, path) -> Path:
    path = Path(path)
    right = result.right_index()
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(result.keys) + ["statistic", "survives", "right_key"])
        for i, (g, s) in enumerate(zip(result.guesses, result.statistic)):
            w.writerow([int(v) for v in g] + [f"{s:.6f}", int(s < result.tau), int(i == right)])
    return path


def plot_attack(result: AttackResult, path) -> Path:
    """Statistic per key guess, right key highlighted, threshold dashed."""
    fig, ax = _figure()
    ax.plot(result.statistic, ".", ms=3, color="0.45")
    right = result.right_index()
    if right is not None:
        ax.plot([right], [result.statistic[right]], "o", color="tab:red", ms=6, label="right key")
        ax.legend(frameon=False)
    ax.axhline(result.tau, color="k", ls="--", lw=0.8)
    ax.set_xlabel("key guess index")
    ax.set_ylabel("T" if result.technique == "ps" else "N W")
    return _save(fig, path)
