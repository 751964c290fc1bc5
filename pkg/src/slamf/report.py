"""Static figures written next to the iteration CSV."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .graph import Problem, VariableKind  # noqa: E402


def convergence_figure(stats, path, title: str = "") -> Path:
    it = np.array([s.iteration for s in stats])
    E = np.array([s.E for s in stats])
    acc = np.array([s.accepted for s in stats])
    fig, ax = plt.subplots(figsize=(5, 3.5))
    # floor at the smallest positive double so a zero final error still plots
    Ep = np.maximum(E, np.finfo(float).tiny)
    ax.semilogy(it[acc], Ep[acc], "o-", label="accepted")
    if (~acc).any():
        ax.semilogy(it[~acc], Ep[~acc], "x", color="tab:red", label="rejected")
    ax.set_xlabel("iteration")
    ax.set_ylabel("E")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def positions(problem: Problem, world_from_body: bool) -> np.ndarray:
    """Pose centers in the world frame; BA cameras store camera-from-world, PGO nodes world-from-body."""
    pts = []
    for var in problem.variables.values():
        if var.kind in (VariableKind.POSE_GLOBAL, VariableKind.POSE_LOCAL):
            T = var.value
            pts.append(T.t if world_from_body else -T.R.T @ T.t)
        elif var.kind is VariableKind.IMU_STATE:
            pts.append(var.value.p)
    return np.array(pts).reshape(-1, 3)


def trajectory_figure(
    initial: Problem, final: Problem, path, world_from_body: bool = True, truth: np.ndarray | None = None
) -> Path | None:
    a, b = positions(initial, world_from_body), positions(final, world_from_body)
    if len(b) == 0:
        return None
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot(a[:, 0], a[:, 1], ".--", color="0.6", label="initial")
    ax.plot(b[:, 0], b[:, 1], "o-", label="optimized")
    if truth is not None and len(truth):
        ax.plot(truth[:, 0], truth[:, 1], "k+", label="truth")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return Path(path)
