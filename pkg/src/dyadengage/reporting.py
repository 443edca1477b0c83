"""Report writers: JSON, aligned text tables, CSV, and matplotlib figures.

JSON artifacts are written with sorted keys and no wall-clock content, so a
rerun with the same config and seed reproduces them byte for byte.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .pipeline import EvalReport


def write_json(path, doc: dict):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def format_table(headers: list, rows: list) -> str:
    """Plain-text table with columns padded to their widest cell."""
    cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = []
    for k, row in enumerate(cells):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _fmt_acc(value) -> str:
    return "n/a" if value is None or (isinstance(value, float) and np.isnan(value)) \
        else f"{value:.4f}"


def report_table(report: EvalReport, title: str = "") -> str:
    rows = []
    for i, lab in enumerate(report.labels):
        rows.append([lab,
                     _fmt_acc(report.precision[i] if not np.isnan(report.precision[i]) else None),
                     _fmt_acc(report.recall[i] if not np.isnan(report.recall[i]) else None),
                     int(report.confusion[i].sum())])
    text = format_table(["level", "precision", "recall", "gold_n"], rows)
    head = f"{title}\naccuracy: {_fmt_acc(None if report.no_data else report.accuracy)}" \
           f"  (n={report.n})\n"
    return head + text


def comparison_table(accuracies: dict) -> str:
    rows = [[name, _fmt_acc(acc)] for name, acc in accuracies.items()]
    return format_table(["method", "accuracy"], rows)


def write_confusion_csv(path, report: EvalReport):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gold\\pred"] + [str(l) for l in report.labels])
        for i, lab in enumerate(report.labels):
            writer.writerow([lab] + [int(v) for v in report.confusion[i]])


def save_confusion_figure(path, report: EvalReport, title: str = "confusion"):
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    conf = report.confusion.astype(float)
    im = ax.imshow(conf, cmap="Blues")
    ax.set_xticks(range(len(report.labels)), [str(l) for l in report.labels])
    ax.set_yticks(range(len(report.labels)), [str(l) for l in report.labels])
    ax.set_xlabel("predicted level")
    ax.set_ylabel("gold level")
    ax.set_title(title)
    vmax = conf.max() if conf.size else 0.0
    for i in range(conf.shape[0]):
        for j in range(conf.shape[1]):
            val = int(conf[i, j])
            if val:
                ax.text(j, i, str(val), ha="center", va="center",
                        color="white" if conf[i, j] > 0.5 * vmax else "black",
                        fontsize=8)
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_comparison_figure(path, accuracies: dict, baseline: float | None = 0.2):
    fig, ax = plt.subplots(figsize=(4.6, 3.2))
    names = list(accuracies)
    values = [0.0 if v is None or np.isnan(v) else v for v in accuracies.values()]
    ax.bar(names, values, color=["#888888", "#4878a8", "#2a5d8f"][:len(names)])
    if baseline is not None:
        ax.axhline(baseline, color="firebrick", linestyle="--", linewidth=1,
                   label=f"random ({baseline:.0%})")
        ax.legend(frameon=False, fontsize=8)
    ax.set_ylabel("engagement accuracy")
    ax.set_ylim(0, 1)
    for i, v in enumerate(values):
        ax.text(i, v + 0.015, f"{v:.2f}", ha="center", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_timeline_figure(path, decoded: dict, gold1=None, gold2=None,
                         title: str = "decoded engagement"):
    """Step plot of both chains' decoded levels, optionally against gold."""
    fig, axes = plt.subplots(2, 1, figsize=(6.4, 3.6), sharex=True)
    t = decoded.get("timestamps") or list(range(len(decoded["chain1"])))
    for ax, chain, gold, name in ((axes[0], decoded["chain1"], gold1, "participant 1"),
                                  (axes[1], decoded["chain2"], gold2, "participant 2")):
        ax.step(t, chain, where="post", label="decoded", linewidth=1.4)
        if gold is not None:
            gt = [(x, g) for x, g in zip(t, gold) if g is not None]
            if gt:
                ax.plot([x for x, _ in gt], [g for _, g in gt], ".",
                        color="firebrick", markersize=3, label="gold")
        ax.set_ylabel(name, fontsize=8)
        ax.set_ylim(0.5, max(chain) + 0.5 if chain else 5.5)
        ax.legend(frameon=False, fontsize=7, loc="upper right")
    axes[1].set_xlabel("time")
    axes[0].set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report_bundle(out_dir, name: str, report: EvalReport, extra: dict | None = None):
    """report.json + aligned text table + confusion CSV + heatmap figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = report.to_json_dict()
    if extra:
        doc.update(extra)
    write_json(out / f"{name}.json", doc)
    with open(out / f"{name}.txt", "w") as fh:
        fh.write(report_table(report, title=name))
    write_confusion_csv(out / f"{name}_confusion.csv", report)
    save_confusion_figure(out / f"{name}_confusion.png", report, title=name)
