"""PNG figures for the CLI reports (matplotlib, headless backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import error_cdf  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def acf_figure(coefficients, bound, title, path) -> Path:
    r = np.asarray(coefficients, dtype=float)
    lags = np.arange(len(r))
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.vlines(lags, 0, r, color="tab:blue")
    ax.plot(lags, r, "o", color="tab:blue", ms=3)
    ax.axhspan(-bound, bound, color="tab:blue", alpha=0.15, lw=0)
    ax.axhline(0, color="black", lw=0.6)
    ax.set_xlabel("lag")
    ax.set_ylabel("autocorrelation")
    ax.set_title(title)
    return _save(fig, path)


def cdf_figure(errors_by_arm: dict, path, title="Absolute prediction error") -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for name, errors in errors_by_arm.items():
        x, p = error_cdf(errors)
        ax.step(x, p, where="post", label=name)
    ax.set_xlabel("|error| (g)")
    ax.set_ylabel("cumulative probability")
    ax.set_ylim(0, 1.02)
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def prediction_figure(mold_index, actual, predicted, path, title="Predicted vs actual weight") -> Path:
    fig, ax = plt.subplots(figsize=(7, 3.2))
    ax.plot(mold_index, actual, color="black", lw=1.0, label="actual")
    ax.plot(mold_index, predicted, color="tab:red", lw=1.0, label="predicted")
    ax.set_xlabel("mold")
    ax.set_ylabel("weight (g)")
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def box_figure(abs_errors_by_arm: dict, path, title="Absolute prediction error") -> Path:
    fig, ax = plt.subplots(figsize=(4.5, 3.6))
    names = list(abs_errors_by_arm)
    ax.boxplot([np.abs(abs_errors_by_arm[n]) for n in names], whis=1.5)
    ax.set_xticks(range(1, len(names) + 1), names)
    ax.set_ylabel("|error| (g)")
    ax.set_title(title)
    return _save(fig, path)


def rmse_bar_figure(rmse_by_arm: dict, path, title="Test RMSE") -> Path:
    names = list(rmse_by_arm)
    means = [rmse_by_arm[n]["mean"] for n in names]
    stds = [rmse_by_arm[n]["std"] for n in names]
    fig, ax = plt.subplots(figsize=(6, 3.4))
    ax.bar(range(len(names)), means, yerr=stds, color="tab:gray", capsize=3)
    ax.set_xticks(range(len(names)), names, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("RMSE (g)")
    ax.set_title(title)
    return _save(fig, path)
