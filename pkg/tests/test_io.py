import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from soccermap.io import (
    FormatError,
    parse_snapshot,
    read_config,
    read_pgm,
    read_surface_text,
    read_tracking,
    snapshot_record,
    thread_limit,
    to_gray,
    write_config,
    write_pgm,
    write_surface,
    write_surface_text,
    write_tracking,
)
from soccermap.network import Surface
from soccermap.synthgen import generate_passes

from strategies import snapshots

CASES = settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])


@CASES
@given(snapshots(with_pass=True))
def test_tracking_record_round_trip(s):
    line = json.dumps(snapshot_record(s))
    assert parse_snapshot(json.loads(line)) == s


@CASES
@given(snapshots(with_pass=False))
def test_tracking_record_round_trip_without_pass(s):
    assert parse_snapshot(json.loads(json.dumps(snapshot_record(s)))) == s


def test_tracking_file_round_trip(tmp_path):
    snaps = generate_passes(30, seed=3)
    path = tmp_path / "t.jsonl"
    assert write_tracking(path, snaps) == 30
    assert read_tracking(path) == snaps
    write_tracking(tmp_path / "u.jsonl", read_tracking(path))
    assert (tmp_path / "u.jsonl").read_bytes() == path.read_bytes()


def test_unknown_fields_strict_and_lenient(tmp_path):
    rec = snapshot_record(generate_passes(1, seed=0)[0])
    rec["weather"] = "rain"
    rec["pass"]["spin"] = 3
    path = tmp_path / "t.jsonl"
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(FormatError, match="weather"):
        read_tracking(path)
    with pytest.warns(UserWarning) as caught:
        snaps = read_tracking(path, strict=False)
    messages = " ".join(str(w.message) for w in caught)
    assert "weather" in messages and "spin" in messages
    assert len(snaps) == 1 and snaps[0].pass_event is not None


@pytest.mark.parametrize("mutate, message", [
    (lambda r: r.pop("ball"), "missing field"),
    (lambda r: r.update(ball=[1.0]), "pair"),
    (lambda r: r["attackers"][0].pop("x"), "missing field x"),
    (lambda r: r["pass"].update(outcome=2), "outcome"),
    (lambda r: r["pass"].pop("dest"), "dest"),
    (lambda r: r.update(attackers=[]), "1-11 players"),
])
def test_malformed_records(mutate, message):
    rec = snapshot_record(generate_passes(1, seed=0)[0])
    mutate(rec)
    with pytest.raises(FormatError, match=message):
        parse_snapshot(rec)


def test_bad_json_reports_line(tmp_path):
    path = tmp_path / "t.jsonl"
    path.write_text(json.dumps(snapshot_record(generate_passes(1, seed=0)[0])) + "\n{nope\n")
    with pytest.raises(FormatError, match=":2:"):
        read_tracking(path)


# ----------------------------------------------------------------------------
# surfaces


@CASES
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_surface_text_round_trip_float64(tmp_path_factory, v):
    path = tmp_path_factory.mktemp("s") / "s.txt"
    write_surface_text(path, Surface(v, "value", "m1@3.0"))
    back = read_surface_text(path)
    assert back.values.tobytes() == v.tobytes()
    assert (back.kind, back.snapshot_id) == ("value", "m1@3.0")


def test_surface_text_round_trip_float32(tmp_path):
    v = np.random.default_rng(0).uniform(0, 1, (104, 68)).astype(np.float32)
    write_surface_text(tmp_path / "s.txt", Surface(v, "probability"))
    back = read_surface_text(tmp_path / "s.txt")
    assert back.values.dtype == np.float32 and back.values.tobytes() == v.tobytes()


def test_surface_text_header_mismatch(tmp_path):
    write_surface_text(tmp_path / "s.txt", Surface(np.zeros((3, 2)), "probability"))
    text = (tmp_path / "s.txt").read_text().replace("# l=3", "# l=4")
    (tmp_path / "s.txt").write_text(text)
    with pytest.raises(FormatError):
        read_surface_text(tmp_path / "s.txt")


def test_gray_scaling_and_orientation():
    v = np.zeros((4, 3))
    v[3, 2] = 2.0  # largest x, largest y: top-right pixel
    v[0, 0] = -2.0  # bottom-left
    img = to_gray(v)
    assert img.shape == (3, 4)
    assert img[0, 3] == 255 and img[2, 0] == 0
    assert img[1, 1] == 128  # 0 sits half way between -2 and 2
    assert np.all(to_gray(np.full((2, 2), 0.3)) == 0)


@CASES
@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 20)),
              elements=st.floats(-10, 10, allow_nan=False)))
def test_pgm_round_trip(tmp_path_factory, v):
    path = tmp_path_factory.mktemp("p") / "s.pgm"
    write_pgm(path, v)
    np.testing.assert_array_equal(read_pgm(path), to_gray(v))


def test_text_and_image_from_same_grid(tmp_path):
    v = np.random.default_rng(1).uniform(0, 1, (104, 68))
    txt, pgm = write_surface(tmp_path / "s", Surface(v, "probability", "x"))
    np.testing.assert_array_equal(read_pgm(pgm), to_gray(read_surface_text(txt).values))
    assert pgm.read_bytes().startswith(b"P5\n104 68\n255\n")


def test_pgm_rejects_other_formats(tmp_path):
    (tmp_path / "a.pgm").write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(FormatError):
        read_pgm(tmp_path / "a.pgm")
    (tmp_path / "b.pgm").write_bytes(b"P5\n2 2\n255\n\x00")
    with pytest.raises(FormatError):
        read_pgm(tmp_path / "b.pgm")


# ----------------------------------------------------------------------------
# config and threads


def test_config_round_trip_and_parsing(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment\nlearning-rate = 0.001\nbatch_size=16\nmulti_scale = false  # trailing\nhead=softmax_selection\n\n")
    cfg = read_config(path)
    assert cfg == {"learning_rate": 0.001, "batch_size": 16, "multi_scale": False, "head": "softmax_selection"}
    write_config(tmp_path / "d.cfg", cfg)
    assert read_config(tmp_path / "d.cfg") == cfg
    (tmp_path / "bad.cfg").write_text("just words\n")
    with pytest.raises(FormatError):
        read_config(tmp_path / "bad.cfg")


def test_thread_limit(monkeypatch):
    from threadpoolctl import threadpool_info

    with thread_limit(1):
        assert all(p["num_threads"] == 1 for p in threadpool_info())
    monkeypatch.setenv("SMAP_THREADS", "1")
    with thread_limit():
        assert all(p["num_threads"] == 1 for p in threadpool_info())
    monkeypatch.delenv("SMAP_THREADS")
    with thread_limit():
        pass
    with pytest.raises(ValueError):
        with thread_limit(0):
            pass
