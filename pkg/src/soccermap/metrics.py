"""Log-loss, positive-class expected calibration error and reliability tables."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

CLAMP = 1e-7


def logloss(preds, labels) -> float:
    p = np.clip(np.asarray(preds, dtype=np.float64), CLAMP, 1 - CLAMP)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {y.shape}")
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def bin_index(preds, k: int) -> np.ndarray:
    """``min(floor(p * K), K - 1)``; p = 1.0 lands in the top bin."""
    p = np.asarray(preds, dtype=np.float64)
    return np.minimum(np.floor(p * k).astype(np.int64), k - 1).clip(0)


@dataclass
class ReliabilityTable:
    bin_lo: np.ndarray
    bin_hi: np.ndarray
    count: np.ndarray
    mean_pred: np.ndarray  # NaN for empty bins
    frac_pos: np.ndarray

    @property
    def n(self) -> int:
        return int(self.count.sum())

    def ece(self) -> float:
        full = self.count > 0
        w = self.count[full] / self.n
        return float(np.sum(w * np.abs(self.frac_pos[full] - self.mean_pred[full])))

    def rows(self, populated_only: bool = False):
        for i in range(len(self.count)):
            if populated_only and self.count[i] == 0:
                continue
            yield (float(self.bin_lo[i]), float(self.bin_hi[i]), int(self.count[i]),
                   float(self.mean_pred[i]), float(self.frac_pos[i]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["bin_lo", "bin_hi", "count", "mean_pred", "frac_pos"])
            for lo, hi, c, mp, fp in self.rows():
                w.writerow([f"{lo:.4f}", f"{hi:.4f}", c,
                            "" if c == 0 else f"{mp:.6f}", "" if c == 0 else f"{fp:.6f}"])


def reliability(preds, labels, k: int = 10) -> ReliabilityTable:
    if k < 1:
        raise ValueError("need at least one bin")
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    idx = bin_index(p, k)
    count = np.bincount(idx, minlength=k).astype(np.int64)
    sum_p = np.bincount(idx, weights=p, minlength=k)
    sum_y = np.bincount(idx, weights=(y == 1).astype(np.float64), minlength=k)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_pred = np.where(count > 0, sum_p / count, np.nan)
        frac_pos = np.where(count > 0, sum_y / count, np.nan)
    edges = np.arange(k + 1) / k
    return ReliabilityTable(edges[:-1], edges[1:], count, mean_pred, frac_pos)


def ece(preds, labels, k: int = 10) -> float:
    """Expected calibration error using the positive-class fraction per bin.

    Empty bins contribute nothing.
    """
    return reliability(preds, labels, k).ece()
