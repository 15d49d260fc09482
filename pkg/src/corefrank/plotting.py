"""Figures written next to the CSV reports."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

COLORS = {"FN": "#1f77b4", "FA": "#ff7f0e", "WL": "#2ca02c"}
LABELS = {"FN": "false new", "FA": "false anaphoric", "WL": "wrong link"}


def _save(fig, path):
    path = os.fspath(path)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp.png"
    fig.savefig(tmp, dpi=120, bbox_inches="tight")
    plt.close(fig)
    os.replace(tmp, path)


def plot_cost_density(rows, path, title="Cost density by error type"):
    """``rows`` as produced by :func:`corefrank.analysis.density_rows`."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for t in ("FN", "FA", "WL"):
        pts = [(l, r, d) for kind, l, r, d in rows if kind == t]
        if not pts:
            continue
        centers = [(l + r) / 2 for l, r, _ in pts]
        ax.plot(centers, [d for _, _, d in pts], color=COLORS[t], label=LABELS[t])
        ax.fill_between(centers, [d for _, _, d in pts], color=COLORS[t], alpha=0.15)
    ax.set_xlabel("reward cost (scaled)")
    ax.set_ylabel("density")
    ax.set_title(title)
    if rows:
        ax.legend(frameon=False)
    _save(fig, path)


def plot_error_counts(counts: dict, path):
    fig, ax = plt.subplots(figsize=(4, 3))
    kinds = ["FN", "FA", "WL"]
    ax.bar(kinds, [counts.get(k, 0) for k in kinds], color=[COLORS[k] for k in kinds])
    ax.set_ylabel("errors")
    _save(fig, path)


def plot_training_log(log, path):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    epochs = [r.epoch for r in log.records]
    ax.plot(epochs, [r.objective_value for r in log.records], label="objective", color="0.4")
    ax.set_xlabel("epoch")
    ax.set_ylabel("objective")
    if any(r.dev for r in log.records):
        ax2 = ax.twinx()
        ax2.plot(epochs, [r.dev.conll_average if r.dev else float("nan") for r in log.records],
                 color="#d62728", label="dev CoNLL avg")
        ax2.set_ylabel("dev CoNLL average")
        ax2.set_ylim(0, 1)
    _save(fig, path)
