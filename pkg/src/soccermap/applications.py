"""Analyses built on predicted surfaces: passing options, positioning, PPA, team tendencies."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from soccermap.channels import (
    FIELD_LENGTH,
    FIELD_WIDTH,
    Player,
    TrackingSnapshot,
    build_channels,
    cell_centers,
    cell_size,
    normalize_attack_direction,
    rasterize,
    scale_channels,
)
from soccermap.network import SoccerMap, Surface

WINDOW = 5  # 5x5 cells
LOOKAHEAD = 1.0  # seconds
MIN_SEPARATION = 5.0  # meters between sub-optimal locations


def _require_head(model: SoccerMap, head: str) -> None:
    if model.spec.head != head:
        raise ValueError(f"expected a {head} model, got {model.spec.head}")


def _surface(model: SoccerMap, snapshot: TrackingSnapshot) -> Surface:
    """Surface for an already normalized snapshot."""
    state = scale_channels(build_channels(snapshot, model.spec.grid))
    return model.forward(state)


def _center(cell, grid) -> tuple[float, float]:
    sx, sy = cell_size(grid)
    return ((cell[0] + 0.5) * sx, (cell[1] + 0.5) * sy)


def _window(center, grid):
    half = WINDOW // 2
    ci, cj = center
    for di in range(-half, half + 1):
        for dj in range(-half, half + 1):
            i, j = ci + di, cj + dj
            if 0 <= i < grid[0] and 0 <= j < grid[1]:
                yield (i, j)


@dataclass
class TeammateOption:
    player_id: str
    current_cell: tuple[int, int]
    current_probability: float
    best_cell: tuple[int, int]
    best_location: tuple[float, float]
    best_probability: float
    gain: float


@dataclass
class OptimalPassResult:
    teammates: list[TeammateOption]
    suboptimal: list[tuple[str, tuple[float, float], float]]  # (player, location, gain)
    surface: Surface

    @property
    def optimal_probability(self) -> float:
        return max((t.best_probability for t in self.teammates), default=float("nan"))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["player_id", "current_i", "current_j", "current_p", "best_x", "best_y", "best_p", "gain"])
            for t in self.teammates:
                w.writerow([t.player_id, *t.current_cell, f"{t.current_probability:.6f}",
                            f"{t.best_location[0]:.2f}", f"{t.best_location[1]:.2f}",
                            f"{t.best_probability:.6f}", f"{t.gain:.6f}"])


def optimal_pass(model: SoccerMap, snapshot: TrackingSnapshot, surface: Surface | None = None) -> OptimalPassResult:
    """Best reachable destination near each teammate, read off one probability surface.

    Candidates for a teammate are the 5x5 cells around where constant-velocity
    motion puts them in one second, plus their current cell, so the gain
    over the current location is never negative.
    """
    _require_head(model, "sigmoid_probability")
    s = normalize_attack_direction(snapshot)
    grid = model.spec.grid
    surf = surface if surface is not None else _surface(model, s)
    carrier_id = s.carrier_id()
    options = []
    positive = []
    for p in s.attackers:
        if p.id == carrier_id:
            continue
        cur = rasterize(p.x, p.y, grid)
        cur_p = surf.at(cur)
        ahead = rasterize(p.x + LOOKAHEAD * p.vx, p.y + LOOKAHEAD * p.vy, grid)
        best, best_p = cur, cur_p
        for cell in _window(ahead, grid):
            v = surf.at(cell)
            gain = v - cur_p
            if gain > 0:
                positive.append((gain, p.id, cell))
            if v > best_p:
                best, best_p = cell, v
        options.append(TeammateOption(p.id, cur, cur_p, best, _center(best, grid), best_p, best_p - cur_p))
    positive.sort(key=lambda t: (-t[0], t[1], t[2]))
    accepted = []
    for gain, pid, cell in positive:
        loc = _center(cell, grid)
        if all(math.hypot(loc[0] - a[1][0], loc[1] - a[1][1]) >= MIN_SEPARATION for a in accepted):
            accepted.append((pid, loc, gain))
    return OptimalPassResult(options, accepted, surf)


@dataclass
class PositioningResult:
    player_id: str
    baseline_probability: float
    gains: np.ndarray  # (5, 5), NaN where the relocation leaves the field
    best_offset: tuple[int, int]  # in cells
    best_location: tuple[float, float]
    best_gain: float
    surfaces: dict


def optimal_position(model: SoccerMap, snapshot: TrackingSnapshot, player_id: str) -> PositioningResult:
    """Move one player across a 5x5 cell neighbourhood and recompute the surface each time.

    The gain at an offset is the probability read at the player's moved
    location minus the baseline probability at their current location.
    """
    _require_head(model, "sigmoid_probability")
    s = normalize_attack_direction(snapshot)
    grid = model.spec.grid
    sx, sy = cell_size(grid)
    player = s.player(player_id)
    half = WINDOW // 2
    base_surface = _surface(model, s)
    base_p = base_surface.at(rasterize(player.x, player.y, grid))
    gains = np.full((WINDOW, WINDOW), np.nan)
    surfaces = {}
    for a, di in enumerate(range(-half, half + 1)):
        for b, dj in enumerate(range(-half, half + 1)):
            x, y = player.x + di * sx, player.y + dj * sy
            if not (0 <= x < FIELD_LENGTH and 0 <= y < FIELD_WIDTH):
                continue
            moved = s.with_player(replace(player, x=x, y=y))
            surf = base_surface if (di, dj) == (0, 0) else _surface(model, moved)
            surfaces[(di, dj)] = surf
            gains[a, b] = surf.at(rasterize(x, y, grid)) - base_p
    a, b = np.unravel_index(np.nanargmax(gains), gains.shape)
    off = (int(a) - half, int(b) - half)
    loc = (player.x + off[0] * sx, player.y + off[1] * sy)
    return PositioningResult(player_id, base_p, gains, off, loc, float(gains[a, b]), surfaces)


# ----------------------------------------------------------------------------
# pass completion added


def ppa(passes: Sequence[tuple[float, float, int]]) -> float:
    """Pass completion added over ``(optimal_p, selected_p, outcome)`` triples.

    Successful passes add ``(1 - opt) * (1 - (opt - sel))``; missed passes
    subtract ``opt * (opt - sel)``. The difference is not clamped.
    """
    total = 0.0
    for opt, sel, outcome in passes:
        if outcome:
            total += (1 - opt) * (1 - (opt - sel))
        else:
            total -= opt * (opt - sel)
    return total


@dataclass
class PpaRecord:
    player_id: str
    ppa_raw: float
    minutes: float
    n_passes: int = 0

    def __post_init__(self):
        if self.minutes <= 0:
            raise ValueError("minutes must be positive")

    @property
    def ppa_per_90(self) -> float:
        return self.ppa_raw * 90.0 / self.minutes


def pass_triples(model: SoccerMap, snapshots: Sequence[TrackingSnapshot]):
    """``(player_id, optimal_p, selected_p, outcome)`` for each labelled snapshot."""
    _require_head(model, "sigmoid_probability")
    out = []
    for snap in snapshots:
        s = normalize_attack_direction(snap)
        res = optimal_pass(model, s)
        dest = rasterize(*s.pass_event.destination, model.spec.grid)
        out.append((s.pass_event.passer_id, res.optimal_probability, res.surface.at(dest), s.pass_event.outcome))
    return out


def ppa_ranking(triples, minutes: dict[str, float]) -> list[PpaRecord]:
    """Aggregate per player and sort by PPA per 90 minutes, best first."""
    by_player = defaultdict(list)
    for pid, opt, sel, outcome in triples:
        by_player[pid].append((opt, sel, outcome))
    records = [PpaRecord(pid, ppa(v), minutes[pid], len(v)) for pid, v in by_player.items()]
    records.sort(key=lambda r: (-r.ppa_per_90, r.player_id))
    return records


def minutes_played(snapshots: Sequence[TrackingSnapshot], match_minutes: float = 90.0) -> dict[str, float]:
    """Every player on the pitch in a match is credited the full match."""
    matches = defaultdict(set)
    for s in snapshots:
        for p in s.attackers + s.defenders:
            matches[p.id].add(s.match_id)
    return {pid: match_minutes * len(m) for pid, m in matches.items()}


def write_ppa_csv(path, records: Sequence[PpaRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["rank", "player_id", "passes", "minutes", "ppa_raw", "ppa_per_90"])
        for k, r in enumerate(records, 1):
            w.writerow([k, r.player_id, r.n_passes, f"{r.minutes:g}", f"{r.ppa_raw:.6f}", f"{r.ppa_per_90:.6f}"])


# ----------------------------------------------------------------------------
# team tendencies


@dataclass
class TendencyResult:
    league_mean: np.ndarray
    team_mean: np.ndarray
    difference: np.ndarray  # team - league
    player_ratios: list[dict[str, float]] = field(default_factory=list)


def team_tendency_maps(league_model: SoccerMap, team_model: SoccerMap,
                       probes: Sequence[TrackingSnapshot]) -> TendencyResult:
    """Mean selection surfaces of both models over ``probes`` and their signed difference.

    ``player_ratios[k]`` maps each attacker of probe ``k`` (passer
    excluded) to ``(team_p - league_p) / league_p`` at their cell.
    """
    _require_head(league_model, "softmax_selection")
    _require_head(team_model, "softmax_selection")
    if league_model.spec.grid != team_model.spec.grid:
        raise ValueError("models use different grids")
    if not probes:
        raise ValueError("no probe states")
    grid = league_model.spec.grid
    league_sum = np.zeros(grid)
    team_sum = np.zeros(grid)
    ratios = []
    for snap in probes:
        s = normalize_attack_direction(snap)
        state = scale_channels(build_channels(s, grid))
        lp = league_model.forward(state).values.astype(np.float64)
        tp = team_model.forward(state).values.astype(np.float64)
        league_sum += lp
        team_sum += tp
        carrier = s.carrier_id()
        r = {}
        for p in s.attackers:
            if p.id == carrier:
                continue
            c = rasterize(p.x, p.y, grid)
            r[p.id] = float((tp[c] - lp[c]) / lp[c])
        ratios.append(r)
    lm = league_sum / len(probes)
    tm = team_sum / len(probes)
    return TendencyResult(lm, tm, tm - lm, ratios)


def probes_near(snapshots: Sequence[TrackingSnapshot], center, radius: float) -> list[TrackingSnapshot]:
    """Snapshots whose ball (normalized frame) lies within ``radius`` meters of ``center``."""
    out = []
    for snap in snapshots:
        bx, by = normalize_attack_direction(snap).ball
        if math.hypot(bx - center[0], by - center[1]) <= radius:
            out.append(snap)
    return out


def mass_beyond(surface_mean: np.ndarray, ball, grid, distance: float) -> float:
    """Share of a selection surface on cells more than ``distance`` meters from ``ball``."""
    cx, cy = cell_centers(grid)
    far = np.hypot(cx - ball[0], cy - ball[1]) > distance
    return float(surface_mean[far].sum())
