"""Figures for simulation traces, written straight to files (Agg backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .worlds import GridWorld, SimTrace  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps output stable between runs
    fig.savefig(path, metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def plot_trace(traces: dict[str, SimTrace], path, title: str = "") -> Path:
    """Numeric world fields (top) and the issued command (bottom) per step,
    one line per named trace."""
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    commands = sorted({c for t in traces.values() for c in t.commands()})
    index = {c: i for i, c in enumerate(commands)}
    for label, trace in traces.items():
        steps = [s.step for s in trace.steps]
        fields = [k for k, v in (trace.steps[0].world.items() if trace.steps else ()) if isinstance(v, int)]
        for k in fields:
            top.plot(steps, [s.world[k] for s in trace.steps], label=f"{label}: {k}")
        bottom.step(steps, [index[c] for c in trace.commands()], where="post", label=label)
    top.set_ylabel("world")
    top.legend(fontsize="small")
    bottom.set_yticks(range(len(commands)), commands)
    bottom.set_xlabel("step")
    bottom.set_ylabel("command")
    bottom.legend(fontsize="small")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_grid_paths(world: GridWorld, traces: dict[str, SimTrace], path, title: str = "") -> Path:
    """Walls as squares, each trace's path as a polyline from the start cell."""
    fig, ax = plt.subplots(figsize=(6, 6 * world.height / world.width))
    if world.walls:
        xs, ys = zip(*sorted(world.walls))
        ax.scatter(xs, ys, marker="s", s=120, color="0.3", label="wall")
    for n, (label, trace) in enumerate(traces.items()):
        off = 0.12 * (n - (len(traces) - 1) / 2)
        xs = [world.start.x] + [s.world["x"] for s in trace.steps]
        ys = [world.start.y] + [s.world["y"] for s in trace.steps]
        ax.plot([x + off for x in xs], [y + off for y in ys], marker=".", label=label)
    ax.plot([world.start.x], [world.start.y], marker="*", markersize=14, color="gold", linestyle="none", label="start")
    ax.set_xlim(-0.5, world.width - 0.5)
    ax.set_ylim(world.height - 0.5, -0.5)
    ax.set_aspect("equal")
    ax.legend(fontsize="small", loc="upper right")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)
