"""Figures and tables for training/evaluation reports (matplotlib, file output only)."""

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .config import STAGES  # noqa: E402

_STYLE = {
    "figure.dpi": 110,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_loss_curves(log_dir, out_path):
    """One panel per stage log found in ``log_dir``; returns the figure path or None."""
    log_dir = Path(log_dir)
    found = [(s, log_dir / f"{s}.csv") for s in STAGES if (log_dir / f"{s}.csv").exists()]
    if not found:
        return None
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(1, len(found), figsize=(3.2 * len(found), 2.6), squeeze=False)
        for ax, (stage, path) in zip(axes[0], found):
            rows = _read_csv(path)
            steps = [int(r["step"]) for r in rows]
            for key in rows[0]:
                if key in ("step", "lr"):
                    continue
                ax.plot(steps, [float(r[key]) for r in rows], label=key, lw=1.2)
            ax.set_yscale("log")
            ax.set_title(stage)
            ax.set_xlabel("step")
            ax.legend(frameon=False, fontsize=7)
        fig.tight_layout()
        fig.savefig(out_path)
        plt.close(fig)
    return Path(out_path)


def plot_samples(rows, out_path, max_rows=4):
    """``rows``: list of dicts of name -> HxWx3 image; drawn as a grid of strips."""
    rows = rows[:max_rows]
    if not rows:
        return None
    names = list(rows[0])
    with plt.rc_context({**_STYLE, "axes.grid": False}):
        fig, axes = plt.subplots(
            len(rows) * len(names), 1, figsize=(6.4, 0.62 * len(rows) * len(names)), squeeze=False
        )
        k = 0
        for row in rows:
            for name in names:
                ax = axes[k, 0]
                ax.imshow(np.clip(row[name], 0, 1), interpolation="nearest")
                ax.set_xticks([])
                ax.set_yticks([])
                ax.set_ylabel(name, rotation=0, ha="right", va="center", fontsize=7)
                k += 1
        fig.tight_layout(h_pad=0.2)
        fig.savefig(out_path)
        plt.close(fig)
    return Path(out_path)


def plot_ablation(reports, out_path):
    """BLEU and mean PSNR per ablation cell."""
    if not reports:
        return None
    tags = [r.get("labels", {}).get("tag", str(i)) for i, r in enumerate(reports)]
    x = np.arange(len(reports))
    with plt.rc_context(_STYLE):
        fig, (a, b) = plt.subplots(1, 2, figsize=(7.5, 2.8))
        a.bar(x, [r["bleu"] for r in reports], color="#4c72b0")
        a.set_ylabel("OCR BLEU")
        b.bar(x, [r["mean_psnr"] for r in reports], color="#dd8452")
        b.set_ylabel("mean PSNR (dB)")
        for ax in (a, b):
            ax.set_xticks(x)
            ax.set_xticklabels(tags, rotation=20, ha="right", fontsize=7)
        fig.tight_layout()
        fig.savefig(out_path)
        plt.close(fig)
    return Path(out_path)


def write_ablation_table(reports, path):
    keys = ["tag", "use_pivot", "use_deback", "bleu", "wer", "fd_surrogate", "mean_psnr",
            "font_consistency", "n_samples", "config_hash"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for r in reports:
            lab = r.get("labels", {})
            w.writerow([lab.get(k, r.get(k)) for k in keys])
    return Path(path)


def render_run_report(report_dir, checkpoint_dir=None, sample_rows=None, reports=None):
    """Write every figure that the available inputs allow; returns the written paths."""
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if checkpoint_dir:
        p = plot_loss_curves(Path(checkpoint_dir) / "logs", report_dir / "loss_curves.png")
        written += [p] if p else []
    if sample_rows:
        written.append(plot_samples(sample_rows, report_dir / "samples.png"))
    if reports:
        written.append(plot_ablation(reports, report_dir / "ablation.png"))
        written.append(write_ablation_table(reports, report_dir / "ablation.csv"))
    (report_dir / "figures.json").write_text(json.dumps([str(p) for p in written], indent=1) + "\n")
    return written
