"""Report rendering: JSON, aligned text tables and PNG figures.

A report is a list of rows as produced by evaluate.run_protocol. The
JSON and text outputs are byte-deterministic for a fixed input; the
figures are rendered with the Agg backend so no display is needed.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("acc", "mrr", "hit2", "hit3", "hit5")
METRIC_LABELS = {
    "acc": "Acc",
    "mrr": "MRR",
    "hit2": "Hit@2",
    "hit3": "Hit@3",
    "hit5": "Hit@5",
}


def _cell(row: dict, key: str) -> str:
    mean = row["mean"][key]
    std = row.get("stddev")
    if std is None:
        return f"{mean:.4f}"
    return f"{mean:.4f}±{std[key]:.4f}"


def render_text_table(rows: list[dict]) -> str:
    """One line per method with aligned metric columns."""
    header = ["method", "mode", "n"] + [METRIC_LABELS[k] for k in METRIC_COLUMNS]
    body = [
        [row["method"], row["mode"], str(row["mean"]["n"])]
        + [_cell(row, k) for k in METRIC_COLUMNS]
        for row in rows
    ]
    widths = [
        max(len(header[c]), *(len(line[c]) for line in body)) if body else len(header[c])
        for c in range(len(header))
    ]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for line in body:
        lines.append("  ".join(v.ljust(w) for v, w in zip(line, widths)).rstrip())
    return "\n".join(lines) + "\n"


def render_metric_figure(rows: list[dict], path: Path) -> None:
    """Grouped bar chart of the mean metrics per method."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    n_methods = len(rows)
    width = 0.8 / max(n_methods, 1)
    for mi, row in enumerate(rows):
        xs = [i + mi * width for i in range(len(METRIC_COLUMNS))]
        ys = [row["mean"][k] for k in METRIC_COLUMNS]
        errs = (
            [row["stddev"][k] for k in METRIC_COLUMNS]
            if row.get("stddev")
            else None
        )
        ax.bar(xs, ys, width=width, label=f"{row['method']}/{row['mode']}", yerr=errs)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(METRIC_COLUMNS))])
    ax.set_xticklabels([METRIC_LABELS[k] for k in METRIC_COLUMNS])
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("score")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _loss_curves(row: dict) -> dict[str, list[float]]:
    curves = {}
    for seed, hist in (row.get("history") or {}).items():
        if "train_loss" in hist:
            curves[f"{row['method']} seed {seed}"] = hist["train_loss"]
        else:
            for stage, sub in hist.items():
                curves[f"{row['method']} {stage} seed {seed}"] = sub["train_loss"]
    return curves


def render_loss_figure(rows: list[dict], path: Path) -> bool:
    """Training-loss curves for every row that carries a history."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    plotted = False
    for row in rows:
        for label, curve in _loss_curves(row).items():
            if curve:
                ax.plot(range(1, len(curve) + 1), curve, label=label)
                plotted = True
    if not plotted:
        plt.close(fig)
        return False
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean train loss")
    ax.set_yscale("log")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def emit_report(rows: list[dict], out_prefix: str | Path, figures: bool = True) -> list[Path]:
    """Write <prefix>.json and <prefix>.txt, plus PNGs unless disabled.

    Returns the list of files written. The JSON and text files contain
    no timestamps or environment details, so identical inputs yield
    identical bytes.
    """
    prefix = Path(out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    json_path = prefix.with_suffix(".json")
    json_path.write_text(json.dumps(rows, indent=1) + "\n", encoding="utf-8")
    written.append(json_path)
    txt_path = prefix.with_suffix(".txt")
    txt_path.write_text(render_text_table(rows), encoding="utf-8")
    written.append(txt_path)
    if figures:
        metrics_png = prefix.parent / (prefix.name + "_metrics.png")
        render_metric_figure(rows, metrics_png)
        written.append(metrics_png)
        loss_png = prefix.parent / (prefix.name + "_loss.png")
        if render_loss_figure(rows, loss_png):
            written.append(loss_png)
    for p in written:
        log.info("wrote %s", p)
    return written


def load_report(path: str | Path) -> list[dict]:
    rows = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(rows, list):
        raise ValueError(f"{path}: report must be a JSON list of rows")
    for row in rows:
        if "mean" not in row or "method" not in row:
            raise ValueError(f"{path}: malformed report row")
    return rows
