"""Figure rendering for grid tasks and sweep results.

Renders value/divergence heatmaps, per-cell policy arrow fields (arrow
opacity proportional to action probability), and log-regret curves, all
saved as SVG next to the delimited sweep output. Output is deterministic:
matplotlib's hash salt is pinned and no date is embedded.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

# Regret is floored before taking log10 so exact-oracle methods plot at a
# finite level instead of -inf.
LOG_REGRET_FLOOR = 1e-12

_SVG_METADATA = {"Date": None}

matplotlib.rcParams["svg.hashsalt"] = "entropic-compose"


def policy_arrow_field(
    policy: np.ndarray,
    width: int,
    height: int,
    moves: tuple[tuple[int, int], ...],
) -> list[dict]:
    """Per-cell arrow geometry for a tabular policy.

    Returns one record per (cell, action): grid position, unit direction
    and opacity equal to the action probability. Zero-displacement moves
    get dx = dy = 0 and are drawn as dots.
    """
    policy = np.asarray(policy, dtype=np.float64)
    if policy.shape != (width * height, len(moves)):
        raise ValueError(
            f"policy shape {policy.shape} does not match {width}x{height} grid "
            f"with {len(moves)} moves"
        )
    arrows = []
    for s in range(width * height):
        col, row = s % width, s // width
        for a, (dx, dy) in enumerate(moves):
            norm = float(np.hypot(dx, dy)) or 1.0
            arrows.append(
                {
                    "col": col,
                    "row": row,
                    "action": a,
                    "dx": dx / norm,
                    "dy": dy / norm,
                    "opacity": float(policy[s, a]),
                }
            )
    return arrows


def save_policy_figure(
    path,
    values: np.ndarray,
    policy: np.ndarray,
    width: int,
    height: int,
    moves: tuple[tuple[int, int], ...],
    title: str = "",
) -> None:
    """Value heat shading plus per-cell action arrows."""
    fig, ax = plt.subplots(figsize=(6, 6))
    grid = np.asarray(values, dtype=np.float64).reshape(height, width)
    im = ax.imshow(grid, origin="lower", cmap="viridis")
    fig.colorbar(im, ax=ax, shrink=0.8)
    for arrow in policy_arrow_field(policy, width, height, moves):
        alpha = min(max(arrow["opacity"], 0.0), 1.0)
        if alpha < 0.01:
            continue
        if arrow["dx"] == 0.0 and arrow["dy"] == 0.0:
            ax.plot(arrow["col"], arrow["row"], "o", color="white", alpha=alpha, ms=3)
        else:
            ax.annotate(
                "",
                xy=(arrow["col"] + 0.38 * arrow["dx"], arrow["row"] + 0.38 * arrow["dy"]),
                xytext=(arrow["col"], arrow["row"]),
                arrowprops={"arrowstyle": "->", "color": "white", "alpha": alpha},
            )
    ax.set_title(title)
    ax.set_xlabel("col")
    ax.set_ylabel("row")
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)


def save_heatmap_figure(
    path, values: np.ndarray, width: int, height: int, title: str = ""
) -> None:
    """Plain per-state heatmap (value or divergence maps)."""
    fig, ax = plt.subplots(figsize=(6, 6))
    grid = np.asarray(values, dtype=np.float64).reshape(height, width)
    im = ax.imshow(grid, origin="lower", cmap="magma")
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_title(title)
    ax.set_xlabel("col")
    ax.set_ylabel("row")
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)


def save_regret_curves(path, rows, task: str, title: str | None = None) -> None:
    """log10 regret (floored at LOG_REGRET_FLOOR) versus b, one line per method."""
    by_method: dict[str, list] = {}
    for r in rows:
        if r.task == task:
            by_method.setdefault(r.method, []).append(r)
    if not by_method:
        raise ValueError(f"no rows for task {task!r}")
    fig, ax = plt.subplots(figsize=(6, 4))
    for method in sorted(by_method):
        rs = sorted(by_method[method], key=lambda r: r.b)
        bs = [r.b for r in rs]
        log_regret = [np.log10(max(r.regret, LOG_REGRET_FLOOR)) for r in rs]
        ax.plot(bs, log_regret, marker="o", ms=3, label=method)
    ax.set_xlabel("b")
    ax.set_ylabel("log10 regret")
    ax.set_title(title if title is not None else f"transfer regret, task {task}")
    ax.legend()
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)
