"""Frame-strip figures of a motion: every ``stride``-th pose side by side, keyframes in red."""
from __future__ import annotations

import numpy as np

from .data import MotionSequence

_AXIS = {"x": 0, "y": 1, "z": 2}


def frame_strip(seq: MotionSequence, stride: int = 5) -> list[int]:
    if stride < 1:
        raise ValueError("stride must be positive")
    return list(range(0, len(seq), stride))


def export_plot(
    seq: MotionSequence,
    out_path,
    stride: int = 5,
    context_indices=(),
    up_axis: str = "y",
    spacing: float = 0.8,
) -> int:
    """Write an orthographic front view of the selected frames; returns how many were drawn.

    Each pose is drawn around its own pelvis (root motion is not shown) and
    shifted right by ``spacing`` metres per frame so poses do not overlap.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    up = _AXIS[up_axis.lower()]
    side = 0 if up != 0 else 2
    frames = frame_strip(seq, stride)
    keys = set(int(i) for i in context_indices)
    pos = seq.joint_positions()
    edges = seq.skeleton.edges()

    plt.rcParams["svg.hashsalt"] = "motionstitch"
    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(frames)), 3.0))
    for k, f in enumerate(frames):
        p = pos[f] - pos[f, 0] * np.eye(3)[side]
        color = "tab:red" if f in keys else "0.35"
        for a, b in edges:
            ax.plot([p[a, side] + k * spacing, p[b, side] + k * spacing], [p[a, up], p[b, up]], color=color, lw=1.5)
        ax.text(k * spacing, p[:, up].min() - 0.12, str(f), ha="center", fontsize=6, color=color)
    ax.set_aspect("equal")
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(out_path, dpi=100, metadata={"Software": None} if str(out_path).endswith(".png") else {"Date": None})
    plt.close(fig)
    return len(frames)
