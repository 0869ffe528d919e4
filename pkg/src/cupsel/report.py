"""Report rendering: delimited metric tables, JSON reports, and figures.

Figures are written next to the delimited output with fixed DPI and
stripped PNG metadata so repeated runs are byte-identical.
"""

from __future__ import annotations

import json
from io import BytesIO
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .mapio import atomic_write_bytes, atomic_write_text  # noqa: E402
from .metrics import METRIC_NAMES, MetricReport  # noqa: E402
from .patching import PatchStat  # noqa: E402
from .selection import SelectionManifest  # noqa: E402

_SAVE_OPTS = dict(dpi=110, metadata={"Software": None})


def metrics_tsv(report: MetricReport) -> str:
    lines = ["image_id\t" + "\t".join(METRIC_NAMES)]
    for row in report.per_image:
        lines.append(row["image_id"] + "\t" + "\t".join(repr(row[m]) for m in METRIC_NAMES))
    return "\n".join(lines) + "\n"


def metrics_json(report: MetricReport) -> str:
    doc = {
        "version": 1,
        "per_image": list(report.per_image),
        "aggregate": report.aggregate,
    }
    return json.dumps(doc, indent=2) + "\n"


def metrics_table(report: MetricReport) -> str:
    """Aligned human-readable table, percentages with two decimals."""
    header = f"{'image_id':<24}" + "".join(f"{m.upper():>10}" for m in METRIC_NAMES)
    lines = [header, "-" * len(header)]
    for row in report.per_image:
        lines.append(
            f"{row['image_id']:<24}"
            + "".join(f"{100.0 * row[m]:>10.2f}" for m in METRIC_NAMES)
        )
    lines.append("-" * len(header))
    agg = report.aggregate
    lines.append(
        f"{'mean±std':<24}"
        + "".join(
            f"{100.0 * agg[m]['mean']:>5.2f}±{100.0 * agg[m]['std']:<4.2f}"
            for m in METRIC_NAMES
        )
    )
    return "\n".join(lines) + "\n"


def write_metrics_report(report: MetricReport, out_dir: str | Path,
                         figures: bool = True) -> list[Path]:
    out_dir = Path(out_dir)
    written = [
        atomic_write_text(out_dir / "metrics.tsv", metrics_tsv(report)),
        atomic_write_text(out_dir / "metrics.json", metrics_json(report)),
        atomic_write_text(out_dir / "metrics.txt", metrics_table(report)),
    ]
    if figures:
        written.append(_per_image_figure(report, out_dir / "metrics_per_image.png"))
        written.append(_summary_figure(report, out_dir / "metrics_summary.png"))
    return written


def _save_fig(fig, path: Path) -> Path:
    buf = BytesIO()
    fig.savefig(buf, format="png", **_SAVE_OPTS)
    plt.close(fig)
    return atomic_write_bytes(path, buf.getvalue())


def _per_image_figure(report: MetricReport, path: Path) -> Path:
    ids = [row["image_id"] for row in report.per_image]
    x = np.arange(len(ids))
    width = 0.8 / len(METRIC_NAMES)
    fig, ax = plt.subplots(figsize=(max(6.0, 0.9 * len(ids) + 2.0), 4.0))
    for i, m in enumerate(METRIC_NAMES):
        vals = [100.0 * row[m] for row in report.per_image]
        ax.bar(x + (i - (len(METRIC_NAMES) - 1) / 2) * width, vals, width, label=m.upper())
    ax.set_xticks(x)
    ax.set_xticklabels(ids, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("score (%)")
    ax.set_title("Per-image segmentation metrics")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save_fig(fig, path)


def _summary_figure(report: MetricReport, path: Path) -> Path:
    agg = report.aggregate
    means = [100.0 * agg[m]["mean"] for m in METRIC_NAMES]
    stds = [100.0 * agg[m]["std"] for m in METRIC_NAMES]
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.bar([m.upper() for m in METRIC_NAMES], means, yerr=stds, capsize=4, color="#4878a8")
    ax.set_ylabel("score (%)")
    ax.set_title(f"Mean ± std over {len(report.per_image)} images")
    fig.tight_layout()
    return _save_fig(fig, path)


def selection_figure(stats: list[PatchStat], manifest: SelectionManifest, path: str | Path) -> Path:
    """Scatter of per-patch (ves_u, ves_p) with the selected set highlighted."""
    path = Path(path)
    selected = manifest.keys()
    u = np.array([s.ves_u for s in stats])
    p = np.array([s.ves_p for s in stats])
    sel = np.array([(s.image_id, s.patch_index) in selected for s in stats])
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    ax.scatter(u[~sel], p[~sel], s=12, c="#b0b0b0", label="not selected")
    ax.scatter(u[sel], p[sel], s=18, c="#c04040", label="selected")
    ax.set_xlabel("ves_u (summed uncertainty, nats)")
    ax.set_ylabel("ves_p (predicted vessel pixels)")
    ax.set_title(f"{manifest.strategy} selection, {len(manifest.entries)}/{len(stats)} patches")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save_fig(fig, path)
