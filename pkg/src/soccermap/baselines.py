"""Benchmark models: constant rate, logistic unit and a two-layer dense net.

The dense models consume handcrafted pass features built from a
velocity-led Gaussian team-influence surrogate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from soccermap import autograd as ag
from soccermap.autograd import GridTensor, Parameter
from soccermap.channels import GOAL, PassEvent, TrackingSnapshot, normalize_attack_direction

INFLUENCE_SIGMA = 5.0  # meters
VELOCITY_LEAD = 0.5  # seconds
LINE_STEP = 1.0  # meters

FEATURE_NAMES = (
    "origin_x", "origin_y", "dest_x", "dest_y",
    "pass_distance",
    "attack_influence_origin", "attack_influence_dest",
    "defend_influence_origin", "defend_influence_dest",
    "angle_to_goal_origin", "angle_to_goal_dest",
    "max_opponent_influence_on_line",
)


def influence(team, point, snapshot: TrackingSnapshot | None = None, sigma: float = INFLUENCE_SIGMA) -> float:
    """Mean Gaussian kernel of ``point`` to each player's 0.5 s-ahead position, in [0, 1].

    ``team`` is a sequence of players (or ``"attack"``/``"defense"`` with
    ``snapshot`` given).
    """
    if isinstance(team, str):
        team = snapshot.attackers if team == "attack" else snapshot.defenders
    if len(team) == 0:
        return 0.0
    px, py = point
    total = 0.0
    for p in team:
        ex = p.x + VELOCITY_LEAD * p.vx
        ey = p.y + VELOCITY_LEAD * p.vy
        total += math.exp(-((px - ex) ** 2 + (py - ey) ** 2) / (2 * sigma**2))
    return min(max(total / len(team), 0.0), 1.0)


def _influence_many(team, pts: np.ndarray, sigma: float = INFLUENCE_SIGMA) -> np.ndarray:
    if len(team) == 0:
        return np.zeros(len(pts))
    lead = np.array([(p.x + VELOCITY_LEAD * p.vx, p.y + VELOCITY_LEAD * p.vy) for p in team])
    d2 = ((pts[:, None, :] - lead[None, :, :]) ** 2).sum(axis=2)
    return np.clip(np.exp(-d2 / (2 * sigma**2)).sum(axis=1) / len(team), 0.0, 1.0)


def max_influence_on_line(team, origin, dest, step: float = LINE_STEP) -> float:
    """Largest influence over points spaced ``step`` meters along origin->dest (endpoints included)."""
    o = np.asarray(origin, dtype=float)
    d = np.asarray(dest, dtype=float)
    n = max(1, int(math.ceil(np.linalg.norm(d - o) / step)))
    t = np.linspace(0.0, 1.0, n + 1)
    pts = o[None, :] + t[:, None] * (d - o)[None, :]
    return float(_influence_many(team, pts).max())


def angle_to_goal(x: float, y: float) -> float:
    return math.atan2(GOAL[1] - y, GOAL[0] - x)


def extract_features(snapshot: TrackingSnapshot, pass_event: PassEvent | None = None) -> np.ndarray:
    """Handcrafted features of one pass, in :data:`FEATURE_NAMES` order (normalized frame)."""
    if pass_event is not None:
        snapshot = replace(snapshot, pass_event=pass_event)
    s = normalize_attack_direction(snapshot)
    pe = s.pass_event
    if pe is None:
        raise ValueError("snapshot has no pass event")
    ox, oy = pe.origin
    dx, dy = pe.destination
    return np.array([
        ox, oy, dx, dy,
        math.hypot(dx - ox, dy - oy),
        influence(s.attackers, (ox, oy)),
        influence(s.attackers, (dx, dy)),
        influence(s.defenders, (ox, oy)),
        influence(s.defenders, (dx, dy)),
        angle_to_goal(ox, oy),
        angle_to_goal(dx, dy),
        max_influence_on_line(s.defenders, (ox, oy), (dx, dy)),
    ])


def feature_matrix(snapshots: Sequence[TrackingSnapshot]) -> np.ndarray:
    return np.stack([extract_features(s) for s in snapshots]) if snapshots else np.zeros((0, len(FEATURE_NAMES)))


def write_features_csv(path, features: np.ndarray, outcomes=None) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(list(FEATURE_NAMES) + (["outcome"] if outcomes is not None else []))
        for i, row in enumerate(features):
            w.writerow([f"{v:.6f}" for v in row] + ([int(outcomes[i])] if outcomes is not None else []))


@dataclass
class FeatureMatrix:
    """Feature rows tagged with whether they have been standardized."""

    values: np.ndarray
    standardized: bool = False

    def __len__(self):
        return len(self.values)


class Standardizer:
    """Column-wise z-scoring with statistics from the training split only."""

    def __init__(self):
        self.mean = None
        self.std = None

    def fit(self, x: np.ndarray) -> "Standardizer":
        x = np.asarray(x, dtype=np.float64)
        self.mean = x.mean(axis=0)
        std = x.std(axis=0)
        self.std = np.where(std > 0, std, 1.0)
        return self

    def transform(self, x: np.ndarray) -> FeatureMatrix:
        return FeatureMatrix((np.asarray(x, dtype=np.float64) - self.mean) / self.std, standardized=True)


class NaiveModel:
    """Predicts the training success rate for every pass."""

    def __init__(self, rate: float):
        self.rate = float(rate)

    @classmethod
    def fit(cls, outcomes) -> "NaiveModel":
        return cls(float(np.mean(outcomes)))

    def predict(self, n) -> np.ndarray:
        n = n if isinstance(n, int) else len(n)
        return np.full(n, self.rate)


def naive_model(train) -> NaiveModel:
    outcomes = train.outcomes() if hasattr(train, "outcomes") else train
    return NaiveModel.fit(outcomes)


class FeatureDataset:
    def __init__(self, features: FeatureMatrix, outcomes):
        self.features = features
        self._outcomes = np.asarray(outcomes, dtype=np.int64)

    def __len__(self):
        return len(self._outcomes)

    def outcomes(self, idx=None):
        return self._outcomes if idx is None else self._outcomes[np.asarray(idx)]


class FeatureNet:
    """Dense network on standardized features ending in a sigmoid unit.

    ``hidden=()`` is the logistic unit; ``hidden=(16, 8)`` the two-layer net.
    """

    def __init__(self, n_features: int, hidden: Sequence[int] = (), seed: int = 0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        self.layers: list[tuple[Parameter, Parameter]] = []
        sizes = [n_features, *hidden, 1]
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            w = ag.truncated_normal(rng, (a, b), ag.he_std(a), dtype) if hidden else np.zeros((a, b), dtype)
            self.layers.append((Parameter(w, f"dense{i}.w"), Parameter(np.zeros(b, dtype), f"dense{i}.b")))

    def parameters(self):
        return [p for pair in self.layers for p in pair]

    def param_count(self) -> int:
        return sum(p.values.size for p in self.parameters())

    def __call__(self, x: GridTensor) -> GridTensor:
        h = x
        for i, (w, b) in enumerate(self.layers):
            h = ag.dense(h, w, b)
            h = ag.relu(h) if i < len(self.layers) - 1 else ag.sigmoid(h)
        return h

    def predict(self, features: FeatureMatrix) -> np.ndarray:
        if not isinstance(features, FeatureMatrix) or not features.standardized:
            raise ValueError("FeatureNet expects standardized features (use Standardizer.transform)")
        return self(GridTensor(features.values)).values[:, 0]

    def batch_loss(self, data: FeatureDataset, idx) -> GridTensor:
        if not data.features.standardized:
            raise ValueError("FeatureNet expects standardized features")
        x = GridTensor(data.features.values[np.asarray(idx)])
        p = ag.reshape(self(x), (len(x.values),))
        return ag.mean(ag.binary_logloss(p, data.outcomes(idx)))


def logistic_net(n_features: int = len(FEATURE_NAMES), seed: int = 0) -> FeatureNet:
    return FeatureNet(n_features, (), seed)


DENSE2_WIDTHS = (16, 8)


def dense2_net(n_features: int = len(FEATURE_NAMES), seed: int = 0) -> FeatureNet:
    return FeatureNet(n_features, DENSE2_WIDTHS, seed)


BASELINES = ("naive", "logistic", "dense2")


class FittedBaseline:
    """A benchmark model bundled with its training-split standardizer."""

    def __init__(self, kind: str, model, standardizer: Standardizer | None = None, history=None):
        self.kind = kind
        self.model = model
        self.standardizer = standardizer
        self.history = history

    def predict(self, snapshots: Sequence[TrackingSnapshot]) -> np.ndarray:
        if self.kind == "naive":
            return self.model.predict(len(snapshots))
        return self.model.predict(self.standardizer.transform(feature_matrix(snapshots)))


def fit_baseline(kind: str, train, val, config=None, seed: int = 0) -> FittedBaseline:
    """Fit one benchmark on ``PassDataset`` splits; features are standardized on ``train`` only."""
    from soccermap.training import TrainConfig, fit

    if kind not in BASELINES:
        raise ValueError(f"unknown baseline {kind!r}; choose from {BASELINES}")
    if kind == "naive":
        return FittedBaseline(kind, naive_model(train))
    config = config or TrainConfig(max_epochs=200, seed=seed)
    st = Standardizer().fit(feature_matrix(train.snapshots))
    tr = FeatureDataset(st.transform(feature_matrix(train.snapshots)), train.outcomes())
    va = FeatureDataset(st.transform(feature_matrix(val.snapshots)), val.outcomes())
    net = logistic_net(seed=seed) if kind == "logistic" else dense2_net(seed=seed)
    net, hist = fit(net, tr, va, config)
    return FittedBaseline(kind, net, st, hist)
