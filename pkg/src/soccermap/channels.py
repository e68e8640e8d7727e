"""Tracking snapshots and their 13-channel grid representation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

FIELD_LENGTH = 104.0
FIELD_WIDTH = 68.0
GOAL = (FIELD_LENGTH, FIELD_WIDTH / 2)
DEFAULT_GRID = (104, 68)

LEFT_TO_RIGHT = "left_to_right"
RIGHT_TO_LEFT = "right_to_left"

CHANNEL_NAMES = (
    "attacker_occupancy",
    "attacker_vx",
    "attacker_vy",
    "defender_occupancy",
    "defender_vx",
    "defender_vy",
    "dist_to_ball",
    "dist_to_goal",
    "sin_goal_ball_angle",
    "cos_goal_ball_angle",
    "angle_to_goal",
    "sin_carrier_teammate_angle",
    "cos_carrier_teammate_angle",
)
N_CHANNELS = len(CHANNEL_NAMES)

DISTANCE_CHANNELS = (6, 7)
VELOCITY_CHANNELS = (1, 2, 4, 5)
DISTANCE_SCALE = 104.0
VELOCITY_SCALE = 10.0


@dataclass(frozen=True)
class Player:
    id: str
    x: float
    y: float
    vx: float = 0.0
    vy: float = 0.0


@dataclass(frozen=True)
class PassEvent:
    origin: tuple[float, float]
    destination: tuple[float, float]
    outcome: int
    passer_id: str
    team_id: str
    minute: float = 0.0
    value: Optional[float] = None

    def __post_init__(self):
        if self.outcome not in (0, 1):
            raise ValueError(f"pass outcome must be 0 or 1, got {self.outcome!r}")
        x, y = self.destination
        if not (0 <= x <= FIELD_LENGTH and 0 <= y <= FIELD_WIDTH):
            raise ValueError(f"pass destination {self.destination} outside the field")


@dataclass(frozen=True)
class TrackingSnapshot:
    attackers: tuple[Player, ...]
    defenders: tuple[Player, ...]
    ball: tuple[float, float]
    goal: tuple[float, float] = GOAL
    pass_event: Optional[PassEvent] = None
    match_id: str = ""
    t: float = 0.0
    attack_direction: Optional[str] = LEFT_TO_RIGHT

    def __post_init__(self):
        for side in (self.attackers, self.defenders):
            if not 1 <= len(side) <= 11:
                raise ValueError(f"each side needs 1-11 players, got {len(side)}")

    def carrier_id(self) -> str:
        """The passer at pass events, otherwise the attacker nearest the ball."""
        if self.pass_event is not None:
            return self.pass_event.passer_id
        bx, by = self.ball
        return min(self.attackers, key=lambda p: (p.x - bx) ** 2 + (p.y - by) ** 2).id

    def carrier(self) -> Player:
        cid = self.carrier_id()
        for p in self.attackers:
            if p.id == cid:
                return p
        raise KeyError(f"ball carrier {cid!r} is not an attacker")

    def player(self, player_id: str) -> Player:
        for p in self.attackers + self.defenders:
            if p.id == player_id:
                return p
        raise KeyError(player_id)

    def with_player(self, player: Player) -> "TrackingSnapshot":
        """Copy with the player of the same id replaced."""
        att = tuple(player if p.id == player.id else p for p in self.attackers)
        dfd = tuple(player if p.id == player.id else p for p in self.defenders)
        return replace(self, attackers=att, defenders=dfd)


@dataclass
class GameState:
    values: np.ndarray  # (l, h, 13)
    channel_names: tuple[str, ...] = CHANNEL_NAMES
    scaled: bool = False
    snapshot_id: str = ""

    @property
    def shape(self):
        return self.values.shape


def _mirror_point(pt):
    return (FIELD_LENGTH - pt[0], FIELD_WIDTH - pt[1])


def _mirror_player(p: Player) -> Player:
    return Player(p.id, FIELD_LENGTH - p.x, FIELD_WIDTH - p.y, -p.vx, -p.vy)


def mirror_snapshot(s: TrackingSnapshot) -> TrackingSnapshot:
    """Point reflection through the field center; the goal is left untouched."""
    pe = s.pass_event
    if pe is not None:
        pe = replace(pe, origin=_mirror_point(pe.origin), destination=_mirror_point(pe.destination))
    return replace(
        s,
        attackers=tuple(_mirror_player(p) for p in s.attackers),
        defenders=tuple(_mirror_player(p) for p in s.defenders),
        ball=_mirror_point(s.ball),
        pass_event=pe,
    )


def flip_width(s: TrackingSnapshot) -> TrackingSnapshot:
    """Reflect across the long axis (y -> 68 - y) of a left-to-right snapshot.

    The attacked goal maps onto itself, so pass difficulty is unchanged.
    """
    s = normalize_attack_direction(s)
    fy = lambda pt: (pt[0], FIELD_WIDTH - pt[1])
    fp = lambda p: Player(p.id, p.x, FIELD_WIDTH - p.y, p.vx, -p.vy)
    pe = s.pass_event
    if pe is not None:
        pe = replace(pe, origin=fy(pe.origin), destination=fy(pe.destination))
    return replace(s, attackers=tuple(map(fp, s.attackers)), defenders=tuple(map(fp, s.defenders)),
                   ball=fy(s.ball), pass_event=pe)


def normalize_attack_direction(s: TrackingSnapshot) -> TrackingSnapshot:
    """Make the team in possession attack left to right.

    Right-to-left snapshots are point-reflected (both axes) so handedness
    is preserved; the attacked goal becomes (104, 34).
    """
    if s.attack_direction is None:
        raise ValueError("snapshot has no attack direction")
    if s.attack_direction == LEFT_TO_RIGHT:
        return s
    if s.attack_direction != RIGHT_TO_LEFT:
        raise ValueError(f"unknown attack direction {s.attack_direction!r}")
    m = mirror_snapshot(s)
    return replace(m, goal=GOAL, attack_direction=LEFT_TO_RIGHT)


def cell_size(grid=DEFAULT_GRID) -> tuple[float, float]:
    return FIELD_LENGTH / grid[0], FIELD_WIDTH / grid[1]


def rasterize(x: float, y: float, grid=DEFAULT_GRID) -> tuple[int, int]:
    """Floor rule on meter coordinates, clamped to the grid."""
    sx, sy = cell_size(grid)
    i = min(max(int(math.floor(x / sx)), 0), grid[0] - 1)
    j = min(max(int(math.floor(y / sy)), 0), grid[1] - 1)
    return i, j


def cell_centers(grid=DEFAULT_GRID) -> tuple[np.ndarray, np.ndarray]:
    """Meter coordinates of every cell center, each of shape (l, h)."""
    sx, sy = cell_size(grid)
    cx = (np.arange(grid[0]) + 0.5) * sx
    cy = (np.arange(grid[1]) + 0.5) * sy
    return np.meshgrid(cx, cy, indexing="ij")


def _angle_between(ux, uy, vx, vy):
    """Signed angle rotating u onto v; zero when either vector vanishes."""
    return np.arctan2(ux * vy - uy * vx, ux * vx + uy * vy)


def build_channels(
    snapshot: TrackingSnapshot,
    grid=DEFAULT_GRID,
    angle_mode: str = "goal_ball",
) -> GameState:
    """Rasterize a normalized snapshot into the 13-channel game state.

    ``angle_mode="goal_ball"`` fills channels 9-10 with the sine/cosine of
    the angle at each cell between the rays to the goal and to the ball;
    ``"goal"`` uses the sine/cosine of the cell-to-goal direction instead.
    """
    l, h = grid
    out = np.zeros((l, h, N_CHANNELS), dtype=np.float32)

    for base, team in ((0, snapshot.attackers), (3, snapshot.defenders)):
        seen = set()
        for p in team:
            i, j = rasterize(p.x, p.y, grid)
            if (i, j) in seen:
                log.debug("rasterization collision at cell %s in %s", (i, j), snapshot.match_id)
            seen.add((i, j))
            out[i, j, base] = 1.0
            out[i, j, base + 1] = p.vx
            out[i, j, base + 2] = p.vy

    cx, cy = cell_centers(grid)
    bx, by = snapshot.ball
    gx, gy = snapshot.goal
    to_ball_x, to_ball_y = bx - cx, by - cy
    to_goal_x, to_goal_y = gx - cx, gy - cy
    out[..., 6] = np.hypot(to_ball_x, to_ball_y)
    out[..., 7] = np.hypot(to_goal_x, to_goal_y)
    goal_angle = np.arctan2(to_goal_y, to_goal_x)
    if angle_mode == "goal_ball":
        theta = _angle_between(to_goal_x, to_goal_y, to_ball_x, to_ball_y)
    elif angle_mode == "goal":
        theta = goal_angle
    else:
        raise ValueError(f"unknown angle_mode {angle_mode!r}")
    out[..., 8] = np.sin(theta)
    out[..., 9] = np.cos(theta)
    out[..., 10] = goal_angle

    carrier = snapshot.carrier()
    for p in snapshot.attackers:
        if p.id == carrier.id:
            continue
        i, j = rasterize(p.x, p.y, grid)
        a = _angle_between(carrier.vx, carrier.vy, p.x - carrier.x, p.y - carrier.y)
        out[i, j, 11] = math.sin(a)
        out[i, j, 12] = math.cos(a)

    sid = f"{snapshot.match_id}@{snapshot.t:g}"
    return GameState(out, snapshot_id=sid)


def scale_channels(state: GameState) -> GameState:
    """Bring distances and velocities to unit-ish range; angles untouched."""
    if state.scaled:
        return state
    v = state.values.copy()
    for c in DISTANCE_CHANNELS:
        v[..., c] /= DISTANCE_SCALE
    for c in VELOCITY_CHANNELS:
        v[..., c] /= VELOCITY_SCALE
    return GameState(v, state.channel_names, scaled=True, snapshot_id=state.snapshot_id)


def game_state(snapshot: TrackingSnapshot, grid=DEFAULT_GRID, angle_mode: str = "goal_ball") -> GameState:
    """Normalize, rasterize and scale: the network's input for one snapshot."""
    return scale_channels(build_channels(normalize_attack_direction(snapshot), grid, angle_mode))


def destination_cell(snapshot: TrackingSnapshot, grid=DEFAULT_GRID) -> tuple[int, int]:
    """Grid cell of the pass destination in the normalized frame."""
    s = normalize_attack_direction(snapshot)
    if s.pass_event is None:
        raise ValueError("snapshot has no pass event")
    return rasterize(*s.pass_event.destination, grid)
