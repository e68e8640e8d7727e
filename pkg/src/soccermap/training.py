"""Single-cell losses, stratified splits, Adam training with early stopping."""

from __future__ import annotations

import csv
import itertools
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from soccermap import autograd as ag
from soccermap.autograd import GridTensor
from soccermap.channels import DEFAULT_GRID, TrackingSnapshot, destination_cell, flip_width, game_state
from soccermap.network import SoccerMap, load_checkpoint

log = logging.getLogger(__name__)

LEARNING_RATES = (1e-3, 1e-4, 1e-5)
BATCH_SIZES = (1, 16, 32)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    beta1: float = 0.9
    beta2: float = 0.999
    min_delta: float = 0.001
    patience: int = 5
    max_epochs: int = 20
    seed: int = 0
    max_seconds: float | None = None  # skip an epoch that would not finish in time


class PassDataset:
    """Labelled pass snapshots; game states are built on demand.

    ``cache=True`` keeps built states in memory, which is worth it for
    small grids only.
    """

    def __init__(self, snapshots: Sequence[TrackingSnapshot], grid=DEFAULT_GRID, split: str = "all",
                 angle_mode: str = "goal_ball", cache: bool = False):
        for s in snapshots:
            if s.pass_event is None:
                raise ValueError(f"snapshot {s.match_id}@{s.t} has no pass event")
        self.snapshots = list(snapshots)
        self.grid = tuple(grid)
        self.split = split
        self.angle_mode = angle_mode
        self._cache = {} if cache else None
        self._cells = np.array([destination_cell(s, self.grid) for s in self.snapshots], dtype=np.int64).reshape(-1, 2)
        self._outcomes = np.array([s.pass_event.outcome for s in self.snapshots], dtype=np.int64)

    def __len__(self):
        return len(self.snapshots)

    def subset(self, idx, split: str | None = None) -> "PassDataset":
        return PassDataset([self.snapshots[i] for i in idx], self.grid, split or self.split, self.angle_mode,
                           cache=self._cache is not None)

    def state(self, i: int) -> np.ndarray:
        if self._cache is not None and i in self._cache:
            return self._cache[i]
        v = game_state(self.snapshots[i], self.grid, self.angle_mode).values
        if self._cache is not None:
            self._cache[i] = v
        return v

    def states(self, idx) -> np.ndarray:
        return np.stack([self.state(int(i)) for i in idx])

    def cells(self, idx=None) -> np.ndarray:
        return self._cells if idx is None else self._cells[np.asarray(idx)]

    def outcomes(self, idx=None) -> np.ndarray:
        return self._outcomes if idx is None else self._outcomes[np.asarray(idx)]

    def values(self, idx=None) -> np.ndarray:
        snaps = self.snapshots if idx is None else [self.snapshots[int(i)] for i in idx]
        return np.array([s.pass_event.value for s in snaps], dtype=np.float64)

    @property
    def class_counts(self) -> dict[int, int]:
        return {0: int((self._outcomes == 0).sum()), 1: int((self._outcomes == 1).sum())}


# ----------------------------------------------------------------------------
# losses on batched surfaces (N, l, h, 1)


def target_location_loss(surface: GridTensor, cells, outcomes) -> GridTensor:
    """Mean log-loss of the surface read at each pass's destination cell."""
    return ag.mean(ag.binary_logloss(ag.gather_cells(surface, cells), outcomes))


def selection_loss(surface: GridTensor, cells) -> GridTensor:
    """Mean cross-entropy of a softmax surface against one-hot destination grids."""
    return ag.mean(ag.neg_log(ag.gather_cells(surface, cells)))


def value_loss(surface: GridTensor, cells, targets) -> GridTensor:
    t = np.asarray(targets, dtype=np.float64)
    if np.any(np.abs(t) > 1) or not np.all(np.isfinite(t)):
        raise ValueError("pass value targets must lie in [-1, 1]")
    return ag.mean(ag.squared_error(ag.gather_cells(surface, cells), t))


def surface_loss(model: SoccerMap, data: PassDataset, idx) -> GridTensor:
    """The loss matching the model's head on samples ``idx`` of ``data``."""
    x = GridTensor(data.states(idx).astype(model.dtype, copy=False))
    surface = model(x)
    cells = data.cells(idx)
    head = model.spec.head
    if head == "sigmoid_probability":
        return target_location_loss(surface, cells, data.outcomes(idx))
    if head == "softmax_selection":
        return selection_loss(surface, cells)
    return value_loss(surface, cells, data.values(idx))


def default_loss(model, data, idx) -> GridTensor:
    if isinstance(model, SoccerMap):
        return surface_loss(model, data, idx)
    return model.batch_loss(data, idx)


def predict_at_destinations(model: SoccerMap, data: PassDataset, batch_size: int = 32) -> np.ndarray:
    out = []
    for start in range(0, len(data), batch_size):
        idx = np.arange(start, min(start + batch_size, len(data)))
        surf = model.predict(data.states(idx))
        c = data.cells(idx)
        out.append(surf[np.arange(len(idx)), c[:, 0], c[:, 1]])
    return np.concatenate(out) if out else np.zeros(0)


def evaluate_loss(model, data, loss_fn=default_loss, batch_size: int = 32) -> float:
    """Sample-weighted mean loss over ``data``, computed without a tape."""
    total, n = 0.0, 0
    for start in range(0, len(data), batch_size):
        idx = np.arange(start, min(start + batch_size, len(data)))
        total += float(loss_fn(model, data, idx).values) * len(idx)
        n += len(idx)
    return total / max(n, 1)


# ----------------------------------------------------------------------------
# splits


def split_dataset(data, seed: int, fractions=(0.6, 0.2, 0.2)):
    """Stratified train/val/test split preserving the success/miss ratio."""
    rng = np.random.default_rng(seed)
    outcomes = data.outcomes()
    parts = ([], [], [])
    cuts = np.cumsum(fractions)[:-1]
    for cls in (0, 1):
        idx = np.flatnonzero(outcomes == cls)
        rng.shuffle(idx)
        bounds = [int(round(c * len(idx))) for c in cuts]
        for part, chunk in zip(parts, np.split(idx, bounds)):
            part.extend(chunk.tolist())
    names = ("train", "val", "test")
    return tuple(data.subset(sorted(p), split=name) for p, name in zip(parts, names))


def with_width_flips(data: PassDataset) -> PassDataset:
    """Training set doubled by adding each pass reflected across the long axis."""
    snaps = data.snapshots + [flip_width(s) for s in data.snapshots]
    return PassDataset(snaps, data.grid, data.split, data.angle_mode, cache=data._cache is not None)


# ----------------------------------------------------------------------------
# fitting


@dataclass
class History:
    rows: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = math.inf
    stopped_early: bool = False

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss", "lr", "batch"])
            for r in self.rows:
                w.writerow([r["epoch"], f"{r['train_loss']:.6f}", f"{r['val_loss']:.6f}", r["lr"], r["batch"]])


def _snapshot_params(model):
    return [p.values.copy() for p in model.parameters()]


def _restore_params(model, saved):
    for p, v in zip(model.parameters(), saved):
        p.values = v


def fit(model, train, val, config: TrainConfig, loss_fn: Callable = default_loss,
        progress: Callable[[dict], None] | None = None):
    """Train with Adam and early stopping; returns ``(model, history)``.

    The returned model carries the parameters of the epoch with the lowest
    validation loss. Training stops once validation loss has failed to
    improve by ``min_delta`` for ``patience`` consecutive epochs, or when
    one more epoch of average length would overrun ``max_seconds``.
    """
    params = model.parameters()
    for p in params:
        p.adam_m[...] = 0
        p.adam_v[...] = 0
        p.zero_grad()
    history = History()
    best_params = _snapshot_params(model)
    history.best_val = evaluate_loss(model, val, loss_fn)
    reference = history.best_val
    wait = 0
    step = 0
    started = time.perf_counter()
    for epoch in range(1, config.max_epochs + 1):
        if config.max_seconds is not None and history.rows:
            elapsed = time.perf_counter() - started
            if elapsed + elapsed / len(history.rows) > config.max_seconds:
                history.stopped_early = True
                break
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(len(train))
        running, seen = 0.0, 0
        t0 = time.perf_counter()
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            with ag.Tape() as tape:
                loss = loss_fn(model, train, idx)
                tape.backward(loss)
            step += 1
            try:
                ag.adam_step(params, config.learning_rate, step, config.beta1, config.beta2)
            except ag.NonFiniteGradientError as err:
                raise TrainingDiverged(f"epoch {epoch}, step {step}: {err}") from err
            for p in params:
                p.zero_grad()
            running += float(loss.values) * len(idx)
            seen += len(idx)
        val_loss = evaluate_loss(model, val, loss_fn)
        row = {
            "epoch": epoch,
            "train_loss": running / max(seen, 1),
            "val_loss": val_loss,
            "lr": config.learning_rate,
            "batch": config.batch_size,
            "seconds": time.perf_counter() - t0,
        }
        history.rows.append(row)
        log.info("epoch %d train %.5f val %.5f (%.0fs)", epoch, row["train_loss"], val_loss, row["seconds"])
        if progress:
            progress(row)
        if not math.isfinite(val_loss):
            raise TrainingDiverged(
                f"validation loss became {val_loss} at epoch {epoch}; last rows: {history.rows[-3:]}"
            )
        if val_loss < history.best_val:
            history.best_val = val_loss
            history.best_epoch = epoch
            best_params = _snapshot_params(model)
        if val_loss < reference - config.min_delta:
            reference = val_loss
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                history.stopped_early = True
                break
    _restore_params(model, best_params)
    return model, history


def config_grid(base: TrainConfig, learning_rates=LEARNING_RATES, batch_sizes=BATCH_SIZES) -> list[TrainConfig]:
    return [replace(base, learning_rate=lr, batch_size=bs) for lr, bs in itertools.product(learning_rates, batch_sizes)]


def grid_search(train, val, configs: Sequence[TrainConfig], build_model: Callable[[], object],
                loss_fn: Callable = default_loss):
    """Fit a fresh model per config; best is the lowest validation loss.

    Returns ``(best_config, best_model, rows)`` with one row per config.
    """
    if not configs:
        raise ValueError("empty config grid")
    rows = []
    best = None
    for cfg in configs:
        model, hist = fit(build_model(), train, val, cfg, loss_fn)
        rows.append({
            "learning_rate": cfg.learning_rate,
            "batch_size": cfg.batch_size,
            "epochs": len(hist.rows),
            "best_epoch": hist.best_epoch,
            "val_loss": hist.best_val,
        })
        if best is None or hist.best_val < best[2]:
            best = (cfg, model, hist.best_val)
    return best[0], best[1], rows


FINETUNE_LR = 1e-5


def finetune(checkpoint, team_subset: PassDataset, config: TrainConfig | None = None,
             val: PassDataset | None = None, head: str | None = None):
    """Warm-start from a checkpoint (path or model) and keep training every layer on ``team_subset``."""
    if len(team_subset) == 0:
        raise ValueError("cannot fine-tune on an empty subset")
    config = config or TrainConfig(learning_rate=FINETUNE_LR)
    if isinstance(checkpoint, SoccerMap):
        model = checkpoint.copy()
    else:
        model = load_checkpoint(checkpoint)
    if head is not None and head != model.spec.head:
        raise ValueError(f"checkpoint head {model.spec.head!r} does not match task head {head!r}")
    return fit(model, team_subset, val if val is not None else team_subset, config)
