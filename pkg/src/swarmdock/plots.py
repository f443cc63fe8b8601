"""Figure rendering for run reports.  File output only (Agg backend)."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .runner import OUTCOME_DOCKED, OUTCOME_FAILED, OUTCOME_ORBIT, RunReport
from .scenario import Scenario
from .vision import _panel_rectangle

_OUTCOME_COLOR = {
    OUTCOME_DOCKED: "tab:green",
    OUTCOME_ORBIT: "tab:blue",
    OUTCOME_FAILED: "tab:red",
}


def _paths_by_chaser(report: RunReport):
    out: dict[str, list[tuple[float, tuple[float, float, float]]]] = defaultdict(list)
    for row in report.trajectory:
        out[row.chaser_id].append((row.t, row.true_position))
    return out


def _draw_target_footprint(ax, scenario: Scenario) -> None:
    pose = scenario.target.pose_at(0.0)
    hx, hy = scenario.target.body_half_extents.x, scenario.target.body_half_extents.y
    from .frames import Vec3

    body = [Vec3(sx * hx, sy * hy, 0.0) for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))]
    bx = [pose.transform(c).x for c in body]
    by = [pose.transform(c).y for c in body]
    ax.fill(bx, by, color="0.75", zorder=1, label="target body")
    for panel in scenario.target.panels:
        corners = _panel_rectangle(panel, pose)
        ax.fill([c.x for c in corners], [c.y for c in corners], color="goldenrod", alpha=0.6, zorder=1)


def plot_run(report: RunReport, path: str | Path, scenario: Scenario | None = None) -> Path:
    """Top-down flight paths and altitude history for one run."""
    path = Path(path)
    fig, (ax_xy, ax_zt) = plt.subplots(1, 2, figsize=(11, 5))

    if scenario is not None:
        _draw_target_footprint(ax_xy, scenario)

    for cid, samples in _paths_by_chaser(report).items():
        xs = [p[1][0] for p in samples]
        ys = [p[1][1] for p in samples]
        ts = [p[0] for p in samples]
        zs = [p[1][2] for p in samples]
        color = _OUTCOME_COLOR.get(report.outcomes.get(cid, OUTCOME_FAILED), "0.4")
        ax_xy.plot(xs, ys, color=color, linewidth=1.2)
        ax_xy.plot(xs[0], ys[0], marker="o", color=color, markersize=5)
        ax_xy.plot(xs[-1], ys[-1], marker="x", color=color, markersize=7)
        ax_zt.plot(ts, zs, color=color, linewidth=1.2, label=f"{cid} ({report.outcomes.get(cid, '?')})")

    ax_xy.set_xlabel("x [m]")
    ax_xy.set_ylabel("y [m]")
    ax_xy.set_title(f"{report.scenario_name}: flight paths (o start, x end)")
    ax_xy.set_aspect("equal", adjustable="datalim")
    ax_xy.grid(True, alpha=0.3)

    ax_zt.set_xlabel("t [s]")
    ax_zt.set_ylabel("z [m]")
    ax_zt.set_title("altitude")
    ax_zt.grid(True, alpha=0.3)
    ax_zt.legend(loc="best", fontsize=8)

    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def plot_batch(reports: list[RunReport], path: str | Path) -> Path:
    """Stacked per-scenario outcome counts for a batch."""
    path = Path(path)
    names = [r.scenario_name for r in reports]
    kinds = (OUTCOME_DOCKED, OUTCOME_ORBIT, OUTCOME_FAILED)
    counts = {
        kind: [sum(1 for o in r.outcomes.values() if o == kind) for r in reports]
        for kind in kinds
    }
    fig, ax = plt.subplots(figsize=(max(6.0, 0.8 * len(reports)), 4.5))
    bottom = [0] * len(reports)
    for kind in kinds:
        ax.bar(names, counts[kind], bottom=bottom, color=_OUTCOME_COLOR[kind], label=kind)
        bottom = [b + c for b, c in zip(bottom, counts[kind])]
    ax.set_ylabel("chasers")
    ax.set_title("outcomes per scenario")
    ax.legend(loc="upper right", fontsize=8)
    plt.setp(ax.get_xticklabels(), rotation=45, ha="right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
