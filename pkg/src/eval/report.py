"""
Metric reports: JSON, text tables and static plots.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from src.eval.detections import Detection
from src.eval.matching import MatchResult
from src.eval.metrics import TP_METRICS, EvalSummary, interpolated_precision
from src.geometry.boxes import Box3D, bev_corners

logger = logging.getLogger(__name__)

ABLATION_FLAGS = ("rgbq", "rcg", "rgpp", "pra")
PNG_METADATA = {"Software": None}


@dataclass(frozen=True)
class AblationRow:
    name: str
    flags: Mapping[str, bool]
    summary: EvalSummary


def write_report(summary: EvalSummary, path: Union[str, Path], extra: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = summary.to_dict()
    if extra:
        payload.update(extra)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2), encoding="utf-8")
    return path


def format_table(summary: EvalSummary) -> str:
    thresholds = sorted({t for per in summary.ap.values() for t in per})
    header = f"{'class':<12}" + "".join(f"{'AP@' + str(t):>9}" for t in thresholds)
    header += "".join(f"{m.upper():>8}" for m in TP_METRICS)
    lines = [header, "-" * len(header)]
    for label, per in summary.ap.items():
        row = f"{label:<12}" + "".join(f"{per[t]:>9.4f}" for t in thresholds)
        errs = summary.class_errors.get(label)
        row += "".join(f"{errs[m]:>8.3f}" if errs else f"{'-':>8}" for m in TP_METRICS)
        lines.append(row)
    lines.append("-" * len(header))
    lines.append(f"mAP  {summary.mean_ap:.4f}")
    lines.append("  ".join(f"m{m.upper()} {summary.errors[m]:.4f}" for m in TP_METRICS))
    lines.append(f"NDS  {summary.nds:.4f}")
    return "\n".join(lines)


def ablation_rows(rows: Sequence[AblationRow]) -> List[dict]:
    """Per-row mAP / NDS with deltas against the first row."""
    if not rows:
        return []
    base = rows[0].summary
    return [
        {
            "name": r.name,
            **{f: bool(r.flags.get(f, False)) for f in ABLATION_FLAGS},
            "mAP": r.summary.mean_ap,
            "NDS": r.summary.nds,
            "d_mAP": r.summary.mean_ap - base.mean_ap,
            "d_NDS": r.summary.nds - base.nds,
        }
        for r in rows
    ]


def format_ablation_table(rows: Sequence[AblationRow]) -> str:
    header = f"{'run':<16}" + "".join(f"{f.upper():>6}" for f in ABLATION_FLAGS)
    header += f"{'mAP':>9}{'NDS':>9}{'dmAP':>9}{'dNDS':>9}"
    lines = [header, "-" * len(header)]
    for r in ablation_rows(rows):
        line = f"{r['name']:<16}" + "".join(f"{'x' if r[f] else '':>6}" for f in ABLATION_FLAGS)
        line += f"{r['mAP']:>9.4f}{r['NDS']:>9.4f}{r['d_mAP']:>+9.4f}{r['d_NDS']:>+9.4f}"
        lines.append(line)
    return "\n".join(lines)


# ==================
# Plots
# ==================

def _save(fig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=PNG_METADATA)
    plt.close(fig)
    logger.debug(f"[report] saved {path}")
    return path


def plot_pr_curves(results: Mapping[str, MatchResult], path: Union[str, Path]) -> Path:
    """One interpolated precision-recall curve per class."""
    fig, ax = plt.subplots(figsize=(5, 4))
    recall = np.linspace(0.0, 1.0, 101)
    for label, result in results.items():
        ax.plot(recall, interpolated_precision(result), label=f"{label} (n={result.n_gt})")
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.05)
    ax.set_title(f"PR @ {next(iter(results.values())).threshold:g} m" if results else "PR")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_tp_errors(summary: EvalSummary, path: Union[str, Path]) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3))
    values = [summary.errors[m] for m in TP_METRICS]
    ax.bar([m.upper() for m in TP_METRICS], values, color="tab:blue")
    for x, v in enumerate(values):
        ax.text(x, v, f"{v:.3f}", ha="center", va="bottom", fontsize=8)
    ax.set_ylabel("Mean error")
    ax.set_title(f"TP errors (NDS {summary.nds:.3f})")
    fig.tight_layout()
    return _save(fig, path)


def plot_bev_scene(dets: Sequence[Detection], gts: Sequence[Box3D], path: Union[str, Path],
                   title: str = "") -> Path:
    """Ground-truth and detected footprints seen from above (x up, y left)."""
    fig, ax = plt.subplots(figsize=(6, 6))
    for box in gts:
        corners = bev_corners(box)
        ax.fill(-corners[:, 1], corners[:, 0], facecolor="none", edgecolor="green", linewidth=1.2)
    for det in dets:
        corners = bev_corners(det.box)
        ax.fill(-corners[:, 1], corners[:, 0], facecolor="none", edgecolor="red",
                linewidth=0.8, alpha=max(0.2, det.score))
    ax.plot(0.0, 0.0, "k^", label="ego")
    ax.plot([], [], color="green", label="ground truth")
    ax.plot([], [], color="red", label="detections")
    ax.set_xlabel("-y [m]")
    ax.set_ylabel("x [m]")
    ax.set_aspect("equal")
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_loss_curve(trace: Sequence[Dict[str, float]], path: Union[str, Path]) -> Path:
    """Total and component losses per training step."""
    fig, ax = plt.subplots(figsize=(6, 4))
    steps = [row["step"] for row in trace]
    keys = [k for k in (trace[0] if trace else {}) if k != "step"]
    for key in keys:
        ax.plot(steps, [row[key] for row in trace], label=key)
    ax.set_xlabel("Step")
    ax.set_ylabel("Loss")
    ax.grid(True, alpha=0.3)
    if keys:
        ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    return _save(fig, path)
