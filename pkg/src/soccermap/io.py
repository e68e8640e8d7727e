"""File formats: JSON-lines tracking files, surface grids (text + PGM), key=value configs."""

from __future__ import annotations

import contextlib
import csv
import json
import os
import re
import warnings
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from soccermap.channels import PassEvent, Player, TrackingSnapshot
from soccermap.network import Surface


class FormatError(ValueError):
    """Malformed or unexpected file content."""


# ----------------------------------------------------------------------------
# tracking files: one JSON object per line

SNAPSHOT_FIELDS = {"match_id", "t", "attack_direction", "attackers", "defenders", "ball", "goal", "pass"}
PLAYER_FIELDS = {"id", "x", "y", "vx", "vy"}
PASS_FIELDS = {"origin", "dest", "outcome", "passer_id", "team_id", "minute", "value"}
_REQUIRED = {"attackers", "defenders", "ball"}
_PASS_REQUIRED = {"dest", "outcome", "passer_id"}


def _player_record(p: Player) -> dict:
    return {"id": p.id, "x": p.x, "y": p.y, "vx": p.vx, "vy": p.vy}


def snapshot_record(s: TrackingSnapshot) -> dict:
    rec = {
        "match_id": s.match_id,
        "t": s.t,
        "attack_direction": s.attack_direction,
        "attackers": [_player_record(p) for p in s.attackers],
        "defenders": [_player_record(p) for p in s.defenders],
        "ball": list(s.ball),
        "goal": list(s.goal),
    }
    if s.pass_event is not None:
        pe = s.pass_event
        rec["pass"] = {
            "origin": list(pe.origin),
            "dest": list(pe.destination),
            "outcome": pe.outcome,
            "passer_id": pe.passer_id,
            "team_id": pe.team_id,
            "minute": pe.minute,
            "value": pe.value,
        }
    return rec


def _check_keys(rec: dict, allowed: set, where: str, strict: bool) -> None:
    extra = sorted(set(rec) - allowed)
    if not extra:
        return
    if strict:
        raise FormatError(f"{where}: unknown field(s) {', '.join(extra)}")
    warnings.warn(f"{where}: ignoring unknown field(s) {', '.join(extra)}", stacklevel=3)


def _pair(v, where: str) -> tuple[float, float]:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise FormatError(f"{where}: expected an [x, y] pair, got {v!r}")
    return (float(v[0]), float(v[1]))


def _player(rec, where: str, strict: bool) -> Player:
    if not isinstance(rec, dict):
        raise FormatError(f"{where}: player must be an object")
    _check_keys(rec, PLAYER_FIELDS, where, strict)
    try:
        return Player(str(rec["id"]), float(rec["x"]), float(rec["y"]),
                      float(rec.get("vx", 0.0)), float(rec.get("vy", 0.0)))
    except KeyError as err:
        raise FormatError(f"{where}: player missing field {err.args[0]}") from None


def parse_snapshot(rec: dict, where: str = "record", strict: bool = True) -> TrackingSnapshot:
    if not isinstance(rec, dict):
        raise FormatError(f"{where}: expected an object")
    _check_keys(rec, SNAPSHOT_FIELDS, where, strict)
    missing = sorted(_REQUIRED - set(rec))
    if missing:
        raise FormatError(f"{where}: missing field(s) {', '.join(missing)}")
    att = tuple(_player(p, f"{where}.attackers[{k}]", strict) for k, p in enumerate(rec["attackers"]))
    dfd = tuple(_player(p, f"{where}.defenders[{k}]", strict) for k, p in enumerate(rec["defenders"]))
    ball = _pair(rec["ball"], f"{where}.ball")
    pe = None
    if rec.get("pass") is not None:
        pr = rec["pass"]
        _check_keys(pr, PASS_FIELDS, f"{where}.pass", strict)
        missing = sorted(_PASS_REQUIRED - set(pr))
        if missing:
            raise FormatError(f"{where}.pass: missing field(s) {', '.join(missing)}")
        value = pr.get("value")
        try:
            pe = PassEvent(
                origin=_pair(pr.get("origin", list(ball)), f"{where}.pass.origin"),
                destination=_pair(pr["dest"], f"{where}.pass.dest"),
                outcome=int(pr["outcome"]),
                passer_id=str(pr["passer_id"]),
                team_id=str(pr.get("team_id", "")),
                minute=float(pr.get("minute", 0.0)),
                value=None if value is None else float(value),
            )
        except ValueError as err:
            raise FormatError(f"{where}.pass: {err}") from None
    kwargs = {}
    if "goal" in rec:
        kwargs["goal"] = _pair(rec["goal"], f"{where}.goal")
    try:
        return TrackingSnapshot(
            attackers=att,
            defenders=dfd,
            ball=ball,
            pass_event=pe,
            match_id=str(rec.get("match_id", "")),
            t=float(rec.get("t", 0.0)),
            attack_direction=rec.get("attack_direction"),
            **kwargs,
        )
    except ValueError as err:
        raise FormatError(f"{where}: {err}") from None


def write_tracking(path, snapshots: Iterable[TrackingSnapshot]) -> int:
    n = 0
    with open(path, "w") as f:
        for s in snapshots:
            f.write(json.dumps(snapshot_record(s), separators=(",", ":")) + "\n")
            n += 1
    return n


def read_tracking(path, strict: bool = True) -> list[TrackingSnapshot]:
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise FormatError(f"{path}:{lineno}: not valid JSON ({err.msg})") from None
            out.append(parse_snapshot(rec, f"{path}:{lineno}", strict))
    return out


# ----------------------------------------------------------------------------
# surface files


def write_surface_text(path, surface: Surface) -> None:
    """Header lines then one row per x cell with ``h`` values."""
    v = np.asarray(surface.values)
    fmt = "%.9g" if v.dtype == np.float32 else "%.17g"
    l, h = v.shape
    with open(path, "w") as f:
        f.write(f"# kind={surface.kind}\n# l={l}\n# h={h}\n# snapshot_id={surface.snapshot_id}\n# dtype={v.dtype.name}\n")
        for row in v:
            f.write(" ".join(fmt % x for x in row) + "\n")


def read_surface_text(path) -> Surface:
    header = {}
    rows = []
    with open(path) as f:
        for line in f:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                header[key] = val
            elif line.strip():
                rows.append([float(x) for x in line.split()])
    try:
        l, h = int(header["l"]), int(header["h"])
    except KeyError as err:
        raise FormatError(f"{path}: header missing {err.args[0]}") from None
    values = np.array(rows, dtype=header.get("dtype", "float64"))
    if values.shape != (l, h):
        raise FormatError(f"{path}: grid is {values.shape}, header says ({l}, {h})")
    return Surface(values, header.get("kind", ""), header.get("snapshot_id", ""))


def to_gray(values: np.ndarray) -> np.ndarray:
    """8-bit image of a (l, h) grid scaled to its [min, max]; row 0 is the top (largest y)."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    scaled = np.zeros_like(v) if hi <= lo else (v - lo) / (hi - lo)
    img = np.rint(scaled * 255).astype(np.uint8)
    return img.T[::-1]


def write_pgm(path, values: np.ndarray) -> None:
    img = to_gray(values)
    rows, cols = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        f.write(img.tobytes())


_PGM_HEADER = re.compile(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s")


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = _PGM_HEADER.match(data)
    if m is None:
        raise FormatError(f"{path}: not a binary PGM")
    cols, rows, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM is supported")
    pixels = data[m.end():]
    if len(pixels) != rows * cols:
        raise FormatError(f"{path}: expected {rows * cols} pixels, found {len(pixels)}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(rows, cols)


def write_surface(stem, surface: Surface) -> tuple[Path, Path]:
    """Write ``<stem>.txt`` and ``<stem>.pgm`` from the same grid."""
    stem = Path(stem)
    txt, pgm = stem.with_suffix(".txt"), stem.with_suffix(".pgm")
    write_surface_text(txt, surface)
    write_pgm(pgm, surface.values)
    return txt, pgm


# ----------------------------------------------------------------------------
# config files


def _parse_value(raw: str):
    low = raw.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for conv in (int, float):
        try:
            return conv(raw)
        except ValueError:
            pass
    return raw


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, dashes in keys become underscores."""
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep or not key.strip():
                raise FormatError(f"{path}:{lineno}: expected key=value")
            out[key.strip().replace("-", "_")] = _parse_value(val.strip())
    return out


def write_config(path, values: dict) -> None:
    with open(path, "w") as f:
        for k in sorted(values):
            f.write(f"{k}={values[k]}\n")


# ----------------------------------------------------------------------------
# threads


@contextlib.contextmanager
def thread_limit(n: int | None = None):
    """Cap BLAS threads at ``n`` (or ``$SMAP_THREADS``); no-op when neither is set."""
    if n is None:
        env = os.environ.get("SMAP_THREADS")
        n = int(env) if env else None
    if n is None:
        yield
        return
    if n < 1:
        raise ValueError("thread count must be positive")
    with threadpool_limits(limits=n):
        yield


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
