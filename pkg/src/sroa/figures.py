"""Figure rendering for the experiment harnesses.

The CSV files remain the authoritative output; these plots are a convenience
view of the same records. The Agg backend keeps rendering headless, and the
PNG Software tag is stripped so identical runs produce identical bytes.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["sweep_figure", "stability_figure"]

_SAVE_KWARGS = {"dpi": 120, "metadata": {"Software": None}}


def sweep_figure(records, path) -> None:
    """Scatter of first-step errors against the bound curves, one model.

    Left panel: weight error vs the estimated perturbation norm with the
    y = eps bound line. Right panel: vector error with its bound curve.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to plot")
    eps = np.array([r.epsilon_hat for r in records])
    lam_err = np.array([r.lambda_err for r in records])
    vec_err = np.array([r.vec_err for r in records])
    vec_bound = np.array([r.vec_bound for r in records])
    order = np.argsort(eps)

    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6))
    axes[0].scatter(eps, lam_err, s=10, alpha=0.6, label="measured")
    axes[0].plot(eps[order], eps[order], "k--", linewidth=1, label="bound")
    axes[0].set_xlabel("estimated perturbation norm")
    axes[0].set_ylabel("weight error")
    axes[0].legend(loc="upper left")

    axes[1].scatter(eps, vec_err, s=10, alpha=0.6, label="measured")
    axes[1].plot(eps[order], vec_bound[order], "k--", linewidth=1, label="bound")
    axes[1].set_xlabel("estimated perturbation norm")
    axes[1].set_ylabel("vector error")
    axes[1].legend(loc="upper left")

    fig.suptitle(f"first extraction errors, {records[0].model} model")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def stability_figure(table, path) -> None:
    """Mean error per extraction step with 2-standard-deviation bars."""
    k = len(table.weight_mean)
    x = np.arange(1, k + 1)

    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6))
    axes[0].errorbar(x, table.weight_mean, yerr=2.0 * table.weight_std, fmt="o-", capsize=3)
    axes[0].set_xlabel("extraction step")
    axes[0].set_ylabel("weight error")

    axes[1].errorbar(x, table.vector_mean, yerr=2.0 * table.vector_std, fmt="o-", capsize=3)
    axes[1].set_xlabel("extraction step")
    axes[1].set_ylabel("vector error")

    fig.suptitle(f"deflation errors per step, {table.kind} model")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
