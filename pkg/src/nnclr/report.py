"""Figure and summary rendering for finished runs and ablation sweeps.

Everything is written to files (Agg backend); nothing opens a window.
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read_metrics(run_dir: str) -> list[dict]:
    path = os.path.join(run_dir, "metrics.jsonl")
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def render_metrics(run_dir: str, out_dir: str | None = None) -> list[str]:
    """Render loss / lr / NN-match curves and a per-epoch summary CSV."""
    out_dir = out_dir or run_dir
    os.makedirs(out_dir, exist_ok=True)
    rows = read_metrics(run_dir)
    steps = [r["step"] for r in rows]
    written = []

    panels = [("loss", "training loss"), ("lr", "learning rate"),
              ("nn_match", "NN label-match rate")]
    for key, label in panels:
        values = [r[key] for r in rows]
        if all(v is None for v in values):
            continue
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(steps, values, lw=1.0)
        ax.set_xlabel("step")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = os.path.join(out_dir, f"{key}.png")
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    # per-epoch means, spreadsheet friendly
    summary_path = os.path.join(out_dir, "summary.csv")
    by_epoch: dict[int, list[dict]] = {}
    for r in rows:
        by_epoch.setdefault(r["epoch"], []).append(r)
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "mean_lr", "mean_nn_match", "mean_wall_ms"])
        for epoch in sorted(by_epoch):
            chunk = by_epoch[epoch]
            nn = [r["nn_match"] for r in chunk if r["nn_match"] is not None]
            writer.writerow([
                epoch,
                sum(r["loss"] for r in chunk) / len(chunk),
                sum(r["lr"] for r in chunk) / len(chunk),
                sum(nn) / len(nn) if nn else "",
                sum(r["wall_ms"] for r in chunk) / len(chunk),
            ])
    written.append(summary_path)
    return written


def render_ablation(rows: list[dict], axis: str, out_path: str) -> str:
    """Bar chart of probe accuracy across one ablation axis."""
    ok = [r for r in rows if r.get("top1") is not None]
    fig, ax = plt.subplots(figsize=(6, 4))
    if ok:
        xs = [str(r["axis_value"]) for r in ok]
        ax.bar(xs, [r["top1"] for r in ok], color="#4878cf")
        ax.set_ylim(0, 1)
    ax.set_xlabel(axis)
    ax.set_ylabel("linear-probe top-1")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
