"""Synthetic matches with a time-to-control outcome oracle.

The oracle plays the part of ground truth: passes are labelled by Bernoulli
draws from :func:`oracle_success_probability`, so the oracle's own
log-loss on a dataset is the floor any learned model can reach.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from soccermap.channels import (
    FIELD_LENGTH,
    FIELD_WIDTH,
    LEFT_TO_RIGHT,
    RIGHT_TO_LEFT,
    PassEvent,
    Player,
    TrackingSnapshot,
    cell_centers,
)
from soccermap.metrics import logloss

ORACLE_VERSION = 1
OPENNESS_WEIGHT = 1.0  # per meter of distance to the closest defender, capped
SPACE_PASS_RATE = 0.1


@dataclass(frozen=True)
class OracleParams:
    ball_speed: float = 15.0
    player_max_speed: float = 7.8
    reaction_time: float = 0.7
    control_sharpness: float = 1.5
    interception_weight: float = 2.0
    interception_radius: float = 3.0
    noise: bool = False

    def __post_init__(self):
        for name in ("ball_speed", "player_max_speed", "reaction_time", "control_sharpness",
                     "interception_weight", "interception_radius"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


# 4-3-3 in the attacking team's own frame (attacking towards x = 104),
# for a ball at the center spot.
FORMATION_433 = (
    (8.0, 34.0),
    (36.0, 10.0), (33.0, 26.0), (33.0, 42.0), (36.0, 58.0),
    (50.0, 20.0), (47.0, 34.0), (50.0, 48.0),
    (64.0, 12.0), (67.0, 34.0), (64.0, 56.0),
)


@dataclass(frozen=True)
class TeamStyle:
    name: str
    anchors: tuple[tuple[float, float], ...] = FORMATION_433
    preferred_length: float = 15.0  # meters
    length_spread: float = 8.0
    forward_bias: float = 0.3
    tempo: float = 1.0  # scales player speeds

    def __post_init__(self):
        for x, y in self.anchors:
            if not (0 <= x <= FIELD_LENGTH and 0 <= y <= FIELD_WIDTH):
                raise ValueError(f"anchor {(x, y)} outside the field")


STYLES = {
    "balanced": TeamStyle("balanced"),
    "short-pass": TeamStyle("short-pass", preferred_length=10.0, length_spread=5.0, forward_bias=0.1),
    "long-ball": TeamStyle("long-ball", preferred_length=35.0, length_spread=10.0, forward_bias=0.8),
}


def _clip_field(x, y, margin=0.5):
    return (min(max(x, margin), FIELD_LENGTH - margin), min(max(y, margin), FIELD_WIDTH - margin))


def _targets(anchors, ball, attacking: bool):
    """Anchor positions shifted with the ball, in the attacking team's frame."""
    bx, by = ball
    out = []
    for k, (ax, ay) in enumerate(anchors):
        if k == 0:  # goalkeeper stays home
            out.append((ax, ay + 0.1 * (by - 34.0)))
            continue
        shift = (bx - 52.0) * (0.75 if attacking else 0.6)
        squeeze = 0.85 if attacking else 0.6
        y = 34.0 + (ay - 34.0) * squeeze + 0.35 * (by - 34.0)
        out.append(_clip_field(ax + shift, y, 2.0))
    return out


def generate_match(
    style_a: TeamStyle,
    style_b: TeamStyle,
    n_frames: int,
    seed: int,
    match_id: str | None = None,
    params: OracleParams = OracleParams(),
    dt: float = 1.0,
    team_names: tuple[str, str] = ("A", "B"),
) -> list[TrackingSnapshot]:
    """Simulate ``n_frames`` snapshots, ``dt`` seconds apart, in absolute coordinates.

    Team A attacks left to right and team B right to left. Each player is
    pulled toward a formation anchor that follows the ball, plus smoothed
    noise; speeds never exceed ``params.player_max_speed``. Player ids are
    ``"<team name>:<shirt>"``.
    """
    names = dict(zip("AB", team_names))
    rng = np.random.default_rng(seed)
    match_id = match_id or f"m{seed}"
    styles = {"A": style_a, "B": style_b}
    pos = {}
    vel = {}
    offsets = {}
    for team in "AB":
        for k in range(11):
            pid = f"{names[team]}:{k + 1}"
            pos[pid] = np.array(styles[team].anchors[k], dtype=float)
            if team == "B":
                pos[pid] = np.array([FIELD_LENGTH, FIELD_WIDTH]) - pos[pid]
            vel[pid] = np.zeros(2)
            offsets[pid] = rng.normal(0, 4.0, size=2)

    ball = np.array([52.0, 34.0])
    ball_drift = np.zeros(2)
    possession = "A"
    frames = []
    for f in range(n_frames):
        if rng.random() < 0.08:
            possession = "B" if possession == "A" else "A"
        ball_drift = 0.8 * ball_drift + rng.normal(0, [6.0, 5.0])
        ball = np.array(_clip_field(*(ball + ball_drift), 3.0))
        # frame of the team in possession: attacking towards x = 104
        own_ball = ball if possession == "A" else np.array([FIELD_LENGTH, FIELD_WIDTH]) - ball
        for team in "AB":
            attacking = team == possession
            ball_in_team_frame = own_ball if attacking else np.array([FIELD_LENGTH, FIELD_WIDTH]) - own_ball
            tgts = _targets(styles[team].anchors, ball_in_team_frame, attacking)
            vmax = params.player_max_speed * min(styles[team].tempo, 1.0)
            for k in range(11):
                pid = f"{names[team]}:{k + 1}"
                offsets[pid] = 0.9 * offsets[pid] + rng.normal(0, 1.8, size=2)
                tx, ty = tgts[k]
                if team == "B":
                    tx, ty = FIELD_LENGTH - tx, FIELD_WIDTH - ty
                target = np.array(_clip_field(tx + offsets[pid][0], ty + offsets[pid][1]))
                v = 0.5 * vel[pid] + 0.5 * (target - pos[pid]) / dt + rng.normal(0, 0.8, size=2)
                speed = float(np.hypot(*v))
                if speed > vmax:
                    v *= vmax / speed
                new = np.array(_clip_field(*(pos[pid] + v * dt), 0.0))
                vel[pid] = (new - pos[pid]) / dt
                pos[pid] = new
        att_team = possession
        def_team = "B" if possession == "A" else "A"
        att_ids = [f"{names[att_team]}:{k + 1}" for k in range(11)]
        carrier = min(att_ids, key=lambda p: float(np.sum((pos[p] - ball) ** 2)))
        ball = pos[carrier].copy()
        attackers = tuple(Player(p, *map(float, pos[p]), *map(float, vel[p])) for p in att_ids)
        defenders = tuple(
            Player(p, *map(float, pos[p]), *map(float, vel[p])) for p in (f"{names[def_team]}:{k + 1}" for k in range(11))
        )
        direction = LEFT_TO_RIGHT if possession == "A" else RIGHT_TO_LEFT
        goal = (FIELD_LENGTH, FIELD_WIDTH / 2) if possession == "A" else (0.0, FIELD_WIDTH / 2)
        frames.append(
            TrackingSnapshot(
                attackers=attackers,
                defenders=defenders,
                ball=(float(ball[0]), float(ball[1])),
                goal=goal,
                match_id=match_id,
                t=f * dt,
                attack_direction=direction,
            )
        )
    return frames


def team_of(player_id: str) -> str:
    return player_id.rsplit(":", 1)[0]


def _passer(snapshot: TrackingSnapshot, passer_id: str | None):
    pid = passer_id or snapshot.carrier_id()
    return pid


def oracle_success_probability(
    snapshot: TrackingSnapshot,
    destination,
    params: OracleParams = OracleParams(),
    passer_id: str | None = None,
) -> np.ndarray:
    """Pass success probability for one or many destinations.

    ``destination`` is an ``(x, y)`` pair or an ``(M, 2)`` array; the
    return value has the matching shape (scalar or ``(M,)``).
    """
    dest = np.asarray(destination, dtype=float)
    single = dest.ndim == 1
    dest = dest.reshape(-1, 2)
    pid = _passer(snapshot, passer_id)
    ball = np.asarray(snapshot.ball, dtype=float)

    att = np.array([(p.x, p.y) for p in snapshot.attackers if p.id != pid], dtype=float).reshape(-1, 2)
    dfd = np.array([(p.x, p.y) for p in snapshot.defenders], dtype=float).reshape(-1, 2)

    def arrival(players):
        if len(players) == 0:
            return np.full(len(dest), np.inf)
        d = np.linalg.norm(dest[:, None, :] - players[None, :, :], axis=2)
        return (params.reaction_time + d / params.player_max_speed).min(axis=1)

    slack = arrival(dfd) - arrival(att)

    seg = dest - ball  # (M, 2)
    seg_len2 = np.sum(seg * seg, axis=1)
    interception = np.zeros(len(dest))
    for d in dfd:
        rel = d - ball
        with np.errstate(invalid="ignore", divide="ignore"):
            u = np.where(seg_len2 > 0, (seg @ rel) / seg_len2, 0.0)
        u = np.clip(u, 0.0, 1.0)
        q = ball + u[:, None] * seg
        dist = np.linalg.norm(d - q, axis=1)
        t_ball = np.linalg.norm(q - ball, axis=1) / params.ball_speed
        t_def = params.reaction_time + dist / params.player_max_speed
        term = np.maximum(0.0, 1.0 - dist / params.interception_radius) * (t_def <= t_ball)
        interception = np.maximum(interception, term)

    z = params.control_sharpness * slack - params.interception_weight * interception
    p = 1.0 / (1.0 + np.exp(-z))
    return p[0] if single else p


def oracle_surface(snapshot: TrackingSnapshot, grid, params: OracleParams = OracleParams(),
                   passer_id: str | None = None) -> np.ndarray:
    """Oracle probability at every cell center of ``grid`` (snapshot frame)."""
    cx, cy = cell_centers(grid)
    pts = np.stack([cx.ravel(), cy.ravel()], axis=1)
    return oracle_success_probability(snapshot, pts, params, passer_id).reshape(grid)


def sample_pass(
    snapshot: TrackingSnapshot,
    style: TeamStyle,
    seed,
    params: OracleParams = OracleParams(),
    minute: float | None = None,
) -> PassEvent:
    """Pick a destination following ``style`` and draw its outcome from the oracle.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    carrier = snapshot.carrier()
    sign = 1.0 if snapshot.attack_direction != RIGHT_TO_LEFT else -1.0
    mates = [p for p in snapshot.attackers if p.id != carrier.id]
    d = np.array([math.hypot(p.x - carrier.x, p.y - carrier.y) for p in mates])
    forward = np.array([sign * (p.x - carrier.x) for p in mates]) / np.maximum(d, 1.0)
    # passers favour open teammates
    openness = np.array([min(math.hypot(p.x - q.x, p.y - q.y) for q in snapshot.defenders) for p in mates])
    logits = (-0.5 * ((d - style.preferred_length) / style.length_spread) ** 2
              + style.forward_bias * forward + OPENNESS_WEIGHT * np.minimum(openness, 20))
    w = np.exp(logits - logits.max())
    target = mates[int(rng.choice(len(mates), p=w / w.sum()))]
    lead = math.hypot(target.x - carrier.x, target.y - carrier.y) / params.ball_speed
    if rng.random() < SPACE_PASS_RATE:
        # ball into space, roughly towards the target
        jitter = rng.normal(0, 8.0, size=2)
    else:
        jitter = rng.normal(0, 1.5, size=2)
    dx = target.x + target.vx * lead + jitter[0]
    dy = target.y + target.vy * lead + jitter[1]
    dest = (float(min(max(dx, 0.0), FIELD_LENGTH)), float(min(max(dy, 0.0), FIELD_WIDTH)))
    p = float(oracle_success_probability(snapshot, dest, params, carrier.id))
    outcome = draw_outcome(p, rng)
    # possession end for the value target
    if outcome:
        adv = rng.uniform(0, 25.0)
        end = _clip_field(dest[0] + sign * adv, dest[1] + rng.normal(0, 5.0))
        attacking_last = bool(rng.random() < 0.7)
    else:
        end, attacking_last = dest, False
    value = xg_proxy(snapshot, end, attacking_last)
    return PassEvent(
        origin=(carrier.x, carrier.y),
        destination=dest,
        outcome=outcome,
        passer_id=carrier.id,
        team_id=team_of(carrier.id),
        minute=snapshot.t / 60.0 if minute is None else minute,
        value=value,
    )


def draw_outcome(p, rng: np.random.Generator):
    """Bernoulli draw(s): 1 with probability ``p``."""
    u = rng.random(np.shape(p))
    out = (u < np.asarray(p)).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def xg_proxy(snapshot: TrackingSnapshot, possession_end_location, possessing_team_won_last_action: bool) -> float:
    """Signed goal-proximity value in [-1, 1]: ``sign * exp(-dist_to_goal / 20)``."""
    gx, gy = snapshot.goal
    x, y = possession_end_location
    v = math.exp(-math.hypot(gx - x, gy - y) / 20.0)
    return v if possessing_team_won_last_action else -v


def attach_pass(snapshot: TrackingSnapshot, pass_event: PassEvent) -> TrackingSnapshot:
    return replace(snapshot, pass_event=pass_event)


def generate_passes(
    n_passes: int,
    seed: int,
    styles: Sequence[TeamStyle] | None = None,
    frames_per_match: int = 200,
    pass_every: int = 1,
    params: OracleParams = OracleParams(),
) -> list[TrackingSnapshot]:
    """A league of synthetic matches yielding ``n_passes`` labelled snapshots.

    Matches are generated round-robin over ``styles``; the style of the
    team in possession drives destination choice.
    """
    styles = list(styles or STYLES.values())
    if len({s.name for s in styles}) != len(styles):
        raise ValueError("style names must be unique; they double as team names")
    pairs = [(a, b) for a in styles for b in styles if a is not b] or [(styles[0], styles[0])]
    rng = np.random.default_rng(seed)
    out: list[TrackingSnapshot] = []
    m = 0
    while len(out) < n_passes:
        a, b = pairs[m % len(pairs)]
        names = (a.name, b.name) if a is not b else (a.name + "-home", a.name + "-away")
        match_seed = int(rng.integers(2**31))
        frames = generate_match(a, b, frames_per_match, match_seed, match_id=f"m{m:04d}", params=params,
                                team_names=names)
        team_style = dict(zip(names, (a, b)))
        for snap in frames[::pass_every]:
            if len(out) >= n_passes:
                break
            style = team_style[team_of(snap.attackers[0].id)]
            pe = sample_pass(snap, style, rng, params)
            out.append(attach_pass(snap, pe))
        m += 1
    return out


def rebalance(snapshots: Sequence[TrackingSnapshot], success_rate: float, seed: int) -> list[TrackingSnapshot]:
    """Subsample so the fraction of successful passes equals ``success_rate``.

    Keeps the largest subset achievable; input order is preserved.
    """
    pos = [i for i, s in enumerate(snapshots) if s.pass_event.outcome == 1]
    neg = [i for i, s in enumerate(snapshots) if s.pass_event.outcome == 0]
    if not 0 < success_rate < 1:
        raise ValueError("success_rate must be in (0, 1)")
    n_total = min(len(pos) / success_rate, len(neg) / (1 - success_rate))
    n_pos = int(round(n_total * success_rate))
    n_neg = int(round(n_total)) - n_pos
    rng = np.random.default_rng(seed)
    keep = set(rng.choice(pos, size=min(n_pos, len(pos)), replace=False).tolist())
    keep |= set(rng.choice(neg, size=min(n_neg, len(neg)), replace=False).tolist())
    return [snapshots[i] for i in sorted(keep)]


def oracle_probabilities(snapshots: Sequence[TrackingSnapshot], params: OracleParams = OracleParams()) -> np.ndarray:
    return np.array([
        float(oracle_success_probability(s, s.pass_event.destination, params, s.pass_event.passer_id))
        for s in snapshots
    ])


def bayes_logloss(snapshots: Sequence[TrackingSnapshot], params: OracleParams = OracleParams()) -> float:
    """Log-loss of the oracle's own probabilities against the sampled outcomes."""
    y = np.array([s.pass_event.outcome for s in snapshots])
    return logloss(oracle_probabilities(snapshots, params), y)
