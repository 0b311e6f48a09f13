"""Report rendering: JSON + CSV tables with matplotlib figures beside them.

Everything lands in one output directory:

    study.json            full deterministic report
    study.csv             per-arm summary table
    trials.csv            one row per trial
    figures/*.png         grade histogram, exposure bars, error scatter

Calibration reports from a replayed session get the same treatment.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .session import EVENT_FRAME, EVENT_REPORT, EVENT_SHOT, EventRecord
from .study import StudyReport

GRADE_ORDER = ["contained", "minor", "major"]
ARM_COLORS = {"guided": "#2b7bba", "blind": "#c44e52"}


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def render_study_figures(report: StudyReport, fig_dir: Path) -> list[Path]:
    fig_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    # Grade histogram per arm.
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    x = np.arange(len(GRADE_ORDER))
    width = 0.38
    for i, arm in enumerate((report.guided, report.blind)):
        counts = [arm.grades.get(g, 0) for g in GRADE_ORDER]
        ax.bar(x + (i - 0.5) * width, counts, width, label=arm.arm, color=ARM_COLORS[arm.arm])
    ax.set_xticks(x, GRADE_ORDER)
    ax.set_ylabel("screws")
    ax.set_title(f"Breach grades over {report.guided.n_trials} insertions per arm")
    ax.legend(frameon=False)
    for spine in ("top", "right"):
        ax.spines[spine].set_visible(False)
    path = fig_dir / "grade_histogram.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    paths.append(path)

    # Exposure per procedure.
    fig, ax = plt.subplots(figsize=(4.0, 3.5))
    arms = [report.guided, report.blind]
    means = [a.exposure.total_s / a.n_trials for a in arms]
    ax.bar([a.arm for a in arms], means, color=[ARM_COLORS[a.arm] for a in arms])
    for i, m in enumerate(means):
        ax.text(i, m, f"{m:.2f} s", ha="center", va="bottom")
    ax.set_ylabel("radiation-on time per procedure [s]")
    ax.set_title(f"Exposure ratio {report.exposure_ratio:.3f}")
    for spine in ("top", "right"):
        ax.spines[spine].set_visible(False)
    path = fig_dir / "exposure.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    paths.append(path)

    # Final placement error scatter.
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    for arm in ("guided", "blind"):
        pts = [(t.final_angle_deg, t.final_tip_offset_mm) for t in report.trials if t.arm == arm]
        if pts:
            a = np.asarray(pts)
            ax.scatter(a[:, 0], a[:, 1], s=9, alpha=0.45, label=arm, color=ARM_COLORS[arm])
    ax.set_xlabel("axis angle error [deg]")
    ax.set_ylabel("tip offset at depth [mm]")
    ax.set_title("Final trajectory error per trial")
    ax.legend(frameon=False)
    for spine in ("top", "right"):
        ax.spines[spine].set_visible(False)
    path = fig_dir / "trajectory_error.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    paths.append(path)
    return paths


def write_study_outputs(report: StudyReport, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / "study.json"
    json_path.write_text(report.to_json())
    csv_path = out / "study.csv"
    _write_csv(csv_path, report.summary_rows())
    trials_path = out / "trials.csv"
    _write_csv(trials_path, [t.to_dict() for t in report.trials])
    figures = render_study_figures(report, out / "figures")
    return {"json": json_path, "csv": csv_path, "trials": trials_path, "figures": figures}


# ---------------------------------------------------------------------------
# Session / calibration reports
# ---------------------------------------------------------------------------

def render_session_figures(events: list[EventRecord], fig_dir: Path) -> list[Path]:
    """Per-view radiograph scatter with target and last overlay drawn in."""
    fig_dir.mkdir(parents=True, exist_ok=True)
    pitch = 0.44
    if events and events[0].kind == "session_created":
        pitch = events[0].payload["scene"]["grid"]["pixel_pitch_mm_per_px"]
    shots = [e.payload for e in events if e.kind == EVENT_SHOT]
    last_overlays: dict[str, dict] = {}
    for e in events:
        if e.kind == EVENT_FRAME:
            for o in e.payload["overlays"]:
                last_overlays[o["view_id"]] = o
    paths = []
    for shot in shots:
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        fid = np.asarray(shot["fiducials_px"], dtype=float)
        if fid.size:
            ax.scatter(fid[:, 0], fid[:, 1], s=6, c="0.65", label="grid fiducials")
        lm = np.asarray(shot["landmarks_px"], dtype=float)
        if lm.size:
            ax.scatter(lm[:, 0], lm[:, 1], s=16, c="k", marker="s", label="anatomy")
        if shot.get("target_overlay"):
            # Overlay geometry is in detector mm; fiducials are pixels.
            t = np.asarray(shot["target_overlay"]["axis_points_2d_mm"], dtype=float)
            ax.plot(t[:, 0] / pitch, t[:, 1] / pitch, "g--", lw=1.2, label="plan")
        o = last_overlays.get(shot["view_id"])
        if o and o.get("tip_2d_mm") is not None:
            a = np.asarray(o["axis_points_2d_mm"], dtype=float) / pitch
            ax.plot(a[:, 0], a[:, 1], "-", c="#2b7bba", lw=1.6, label="tool")
            ax.plot(o["tip_2d_mm"][0] / pitch, o["tip_2d_mm"][1] / pitch, "o", c="#2b7bba", ms=5)
        ax.set_aspect("equal")
        ax.set_title(
            f"{shot['view_id']}  src res {shot['source_residual_mm']:.2e} mm, "
            f"dewarp rms {shot['dewarp_fit_rms_px']:.2e} px"
        )
        ax.set_xlabel("px")
        ax.set_ylabel("px")
        ax.legend(frameon=False, fontsize=7, loc="upper right")
        path = fig_dir / f"view_{shot['view_id']}.png"
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        paths.append(path)
    return paths


def write_session_report(events: list[EventRecord], out_dir: str | Path) -> dict:
    """Calibration summary (sources, residuals, dewarp rms) plus figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    shots = [e.payload for e in events if e.kind == EVENT_SHOT]
    reports = [e.payload for e in events if e.kind == EVENT_REPORT]
    calibration = {
        "views": [
            {
                "view_id": s["view_id"],
                "label": s["label"],
                "kind": s["kind"],
                "source_grid_mm": s["source_grid_mm"],
                "source_residual_mm": s["source_residual_mm"],
                "dewarp_fit_rms_px": s["dewarp_fit_rms_px"],
                "low_fiducial_warning": s["low_fiducial_warning"],
            }
            for s in shots
        ],
        "final_report": reports[-1] if reports else None,
    }
    json_path = out / "calibration.json"
    json_path.write_text(json.dumps(calibration, sort_keys=True, indent=2))
    rows = [
        {
            "view_id": v["view_id"],
            "label": v["label"],
            "kind": v["kind"],
            "source_residual_mm": f"{v['source_residual_mm']:.6g}",
            "dewarp_fit_rms_px": f"{v['dewarp_fit_rms_px']:.6g}",
            "low_fiducial_warning": v["low_fiducial_warning"],
        }
        for v in calibration["views"]
    ]
    _write_csv(out / "calibration.csv", rows)
    figures = render_session_figures(events, out / "figures")
    return {"json": json_path, "csv": out / "calibration.csv", "figures": figures}
