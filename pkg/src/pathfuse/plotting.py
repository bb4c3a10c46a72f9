"""Matplotlib figures written as self-contained, reproducible SVG files."""

from __future__ import annotations

import io
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# Fixed hash salt and no timestamp keep SVG output byte-stable across runs.
_RC = {
    "svg.hashsalt": "pathfuse",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _new(figsize=(4.0, 3.2)):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=figsize)
    return fig, ax


def to_svg(fig) -> str:
    buf = io.StringIO()
    with plt.rc_context(_RC):
        fig.savefig(buf, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    return buf.getvalue()


def save_svg(fig, path) -> None:
    with open(path, "w") as fh:
        fh.write(to_svg(fig))


def pr_curve(rows, title="Merge threshold sweep"):
    fig, ax = _new()
    pts = [(r["recall"], r["precision"], r["threshold"]) for r in rows if r["precision"] is not None and r["recall"] is not None]
    if pts:
        rec, prec, thr = zip(*pts)
        ax.plot(rec, prec, "-o", color="k", ms=3, lw=1.2)
        for x, y, t in pts:
            ax.annotate(f"{t:g}", (x, y), textcoords="offset points", xytext=(4, 2), fontsize=7)
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.set_title(title)
    return fig


def beta_curve(rows, title="No-fusion selection accuracy"):
    fig, ax = _new()
    xs = np.arange(len(rows))
    ax.errorbar(
        xs,
        [r["psa"] for r in rows],
        yerr=[r["stderr"] for r in rows],
        fmt="o",
        color="C0",
        capsize=3,
    )
    ax.set_xticks(xs)
    ax.set_xticklabels([f"{r['beta']:g}" for r in rows])
    ax.set_xlabel(r"$\beta$")
    ax.set_ylabel("Accuracy")
    ax.set_ylim(0, 1.0)
    ax.set_title(title)
    return fig


def _bev_extent(spec):
    x0, x1, z0, z1 = spec.extent
    return [x0, x1, z0, z1]


def plan_figure(cmap, diagnostics, pathset=None, goal_direction=None, branches=None):
    """BEV cost map with candidates, representatives and the selected path."""
    fig, ax = _new((4.0, 4.0))
    ax.imshow(cmap.cells, origin="lower", extent=_bev_extent(cmap.spec), cmap="Greys", vmin=0, vmax=1)
    if pathset is not None:
        top = set(diagnostics.top_k_indices)
        for i, p in enumerate(pathset.paths):
            w = p.waypoints
            ax.plot(w[:, 0], w[:, 1], color="C0" if i in top else "0.75", lw=0.6 if i in top else 0.3)
    for r in diagnostics.representatives:
        ax.plot(r.waypoints[:, 0], r.waypoints[:, 1], color="C2", lw=1.5)
    sel = diagnostics.selected.waypoints
    ax.plot(sel[:, 0], sel[:, 1], color="C3", lw=2.2)
    if branches:
        for b in branches:
            poly = np.asarray(b["polyline"])
            ax.plot(poly[:, 0], poly[:, 1], ":", color="C1", lw=1)
    if goal_direction is not None:
        g = np.asarray(goal_direction, dtype=float)
        x0, x1, z0, z1 = cmap.spec.extent
        # Goal marker on the map border along the goal bearing.
        scale = min(
            (x1 if g[0] > 0 else x0) / g[0] if abs(g[0]) > 1e-12 else math.inf,
            (z1 if g[1] > 0 else z0) / g[1] if abs(g[1]) > 1e-12 else math.inf,
        )
        ax.plot([g[0] * scale], [g[1] * scale], "o", color="limegreen", ms=7)
    x0, x1, z0, z1 = cmap.spec.extent
    ax.set_xlim(x0, x1)
    ax.set_ylim(z0, z1)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("z [m]")
    ax.set_title(f"{diagnostics.strategy}, k={diagnostics.k}")
    return fig


def render_replay_frame(world, simlog, index):
    """World truth, robot trace up to ``index``, current plan and checkpoints."""
    fig, ax = _new((4.0, 4.0))
    spec = world.truth.spec
    ax.imshow(world.truth.cells, origin="lower", extent=_bev_extent(spec), cmap="Greys", vmin=0, vmax=1)
    trace = np.array([r["state"][:2] for r in simlog.records[: index + 1]])
    ax.plot(trace[:, 0], trace[:, 1], color="C0", lw=1.2)
    rec = simlog.records[index]
    if rec.get("selected"):
        sel = np.asarray(rec["selected"])
        ax.plot(sel[:, 0], sel[:, 1], color="C3", lw=1.8)
    x, z, th = rec["state"][:3]
    ax.plot([x], [z], "o", color="C0", ms=4)
    ax.plot([x, x + 0.6 * math.cos(th)], [z, z + 0.6 * math.sin(th)], color="C0", lw=1)
    for c in simlog.header.get("mission", {}).get("checkpoints", []):
        ax.add_patch(plt.Circle((c["x"], c["z"]), c["radius"], fill=False, color="limegreen"))
    ax.set_aspect("equal")
    ax.set_title(f"step {rec['step']}  t={rec['time']:.2f}s")
    return to_svg(fig)
