"""Report output: canonical JSON, CSV alongside, and matplotlib figures."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False))


def _write_csv(path: Path, rows: list[dict], fieldnames: list[str]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def write_alignment_report(prefix, rows: list[dict]) -> list[str]:
    """Write <prefix>.json/.csv/.png for a per-layer alignment report."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    fields = [
        "layer",
        "mean_selected_correlation",
        "min_selected_correlation",
        "fraction_above_half",
        "zero_variance_columns",
    ]
    _write_json(prefix.with_suffix(".json"), rows)
    _write_csv(prefix.with_suffix(".csv"), rows, fields)

    layers = [r["layer"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(layers, [r["mean_selected_correlation"] for r in rows], label="mean selected")
    ax.plot(layers, [r["min_selected_correlation"] for r in rows], "ko-", label="min selected")
    ax.set_xlabel("student layer")
    ax.set_ylabel("selected correlation")
    ax.set_ylim(-1.05, 1.05)
    ax.set_xticks(layers)
    ax.legend()
    fig.tight_layout()
    fig.savefig(prefix.with_suffix(".png"), dpi=120)
    plt.close(fig)
    return [str(prefix.with_suffix(ext)) for ext in (".json", ".csv", ".png")]


def write_experiment_report(prefix, report: dict) -> list[str]:
    """Write <prefix>.json/.csv/.png for a toy experiment report."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    rows = report["per_seed"]
    fields = list(rows[0].keys())
    _write_json(prefix.with_suffix(".json"), report)
    _write_csv(prefix.with_suffix(".csv"), rows, fields)

    seeds = [r["seed"] for r in rows]
    x = range(len(seeds))
    width = 0.38
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 3.5))
    ax1.bar([i - width / 2 for i in x], [r["tm_step0_loss"] for r in rows], width,
            label="transfer init")
    ax1.bar([i + width / 2 for i in x], [r["baseline_step0_loss"] for r in rows], width,
            label="fresh init")
    ax1.set_xticks(list(x), [str(s) for s in seeds])
    ax1.set_xlabel("seed")
    ax1.set_ylabel("step-0 training loss")
    ax1.legend()
    ax2.bar([i - width / 2 for i in x], [r["tm_val_accuracy"] for r in rows], width,
            label="transfer init")
    ax2.bar([i + width / 2 for i in x], [r["baseline_val_accuracy"] for r in rows], width,
            label="fresh init")
    ax2.axhline(report["summary"]["mean_teacher_val_accuracy"], color="k", ls="--",
                lw=1, label="teacher mean")
    ax2.set_xticks(list(x), [str(s) for s in seeds])
    ax2.set_xlabel("seed")
    ax2.set_ylabel("final val accuracy")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(prefix.with_suffix(".png"), dpi=120)
    plt.close(fig)
    return [str(prefix.with_suffix(ext)) for ext in (".json", ".csv", ".png")]
