"""Matplotlib figures written to files (Agg backend, no display)."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from soccermap.channels import FIELD_LENGTH, FIELD_WIDTH, TrackingSnapshot  # noqa: E402
from soccermap.metrics import ReliabilityTable  # noqa: E402

_META = {"Software": None}  # keep PNG bytes stable across runs


def _save(fig, path) -> None:
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def _pitch(ax) -> None:
    ax.set_xlim(0, FIELD_LENGTH)
    ax.set_ylim(0, FIELD_WIDTH)
    ax.set_aspect("equal")
    ax.plot([FIELD_LENGTH / 2] * 2, [0, FIELD_WIDTH], color="white", lw=1)
    ax.add_patch(plt.Circle((FIELD_LENGTH / 2, FIELD_WIDTH / 2), 9.15, fill=False, color="white", lw=1))
    for x0, w in ((0, 16.5), (FIELD_LENGTH - 16.5, 16.5)):
        ax.add_patch(plt.Rectangle((x0, FIELD_WIDTH / 2 - 20.16), w, 40.32, fill=False, color="white", lw=1))
    ax.set_xticks([])
    ax.set_yticks([])


def plot_surface(path, values: np.ndarray, snapshot: TrackingSnapshot | None = None, title: str = "",
                 cmap: str = "viridis", center_zero: bool = False, marks: Sequence = ()) -> None:
    """Heatmap of an (l, h) grid over the pitch with optional players and marked points."""
    v = np.asarray(values, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(7.5, 5))
    kw = {}
    if center_zero:
        m = float(np.abs(v).max()) or 1.0
        kw = {"vmin": -m, "vmax": m}
        cmap = "RdBu_r"
    im = ax.imshow(v.T, origin="lower", extent=(0, FIELD_LENGTH, 0, FIELD_WIDTH), cmap=cmap,
                   interpolation="nearest", **kw)
    _pitch(ax)
    if snapshot is not None:
        for team, color in ((snapshot.attackers, "tab:red"), (snapshot.defenders, "tab:blue")):
            xs = [p.x for p in team]
            ys = [p.y for p in team]
            ax.scatter(xs, ys, c=color, s=30, edgecolors="white", zorder=3)
            ax.quiver(xs, ys, [p.vx for p in team], [p.vy for p in team], color=color,
                      angles="xy", scale_units="xy", scale=1, width=0.003, zorder=3)
        ax.scatter([snapshot.ball[0]], [snapshot.ball[1]], c="white", s=15, edgecolors="black", zorder=4)
    for x, y in marks:
        ax.scatter([x], [y], marker="x", c="black", s=40, zorder=5)
    fig.colorbar(im, ax=ax, shrink=0.8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def plot_reliability(path, table: ReliabilityTable, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot([0, 1], [0, 1], ls="--", color="grey", lw=1)
    ok = table.count > 0
    centers = (table.bin_lo + table.bin_hi) / 2
    ax.bar(centers[ok], table.frac_pos[ok], width=table.bin_hi[0] - table.bin_lo[0], alpha=0.4,
           edgecolor="black", label="observed rate")
    ax.plot(table.mean_pred[ok], table.frac_pos[ok], marker="o", color="tab:red", label="mean prediction")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("predicted probability")
    ax.set_ylabel("fraction successful")
    ax.set_title(title or f"ECE {table.ece():.4f}")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def plot_ablation(path, names: Sequence[str], losses: Sequence[float], reference: float | None = None) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    y = np.arange(len(names))
    ax.barh(y, losses, color="tab:blue")
    ax.set_yticks(y)
    ax.set_yticklabels(names)
    ax.invert_yaxis()
    if reference is not None:
        ax.axvline(reference, color="black", ls="--", lw=1, label="oracle floor")
        ax.legend(fontsize=8)
    lo = min(list(losses) + ([reference] if reference is not None else []))
    ax.set_xlim(lo * 0.95, max(losses) * 1.02)
    ax.set_xlabel("held-out log-loss")
    fig.tight_layout()
    _save(fig, path)


def plot_history(path, rows: Sequence[dict]) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ep = [r["epoch"] for r in rows]
    ax.plot(ep, [r["train_loss"] for r in rows], marker="o", label="train")
    ax.plot(ep, [r["val_loss"] for r in rows], marker="o", label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)
