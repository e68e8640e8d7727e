import csv
import subprocess
import sys

import numpy as np
import pytest

from soccermap import cli
from soccermap.io import read_pgm, read_surface_text, read_tracking
from soccermap.network import NetworkSpec, assemble, load_checkpoint, save_checkpoint

SMALL = ["--grid", "16x12", "--filters", "2"]


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def table(out):
    return [line.split("\t") for line in out.strip().splitlines()]


def keyed(out):
    return {k: v for k, v in table(out)[1:]}


@pytest.fixture(scope="module")
def league(tmp_path_factory):
    d = tmp_path_factory.mktemp("league")
    assert cli.main(["gen-data", "--n-passes", "80", "--frames-per-match", "60", "--seed", "5",
                     "--out-dir", str(d)]) == 0
    return d / "tracking.jsonl"


@pytest.fixture(scope="module")
def small_model(tmp_path_factory):
    path = tmp_path_factory.mktemp("m") / "m.smap"
    save_checkpoint(assemble(NetworkSpec(grid=(16, 12), filters=2, prediction_filters=2,
                                         upsampling_filters=2), seed=0), path)
    return path


def test_help_via_entry_point():
    r = subprocess.run([sys.executable, "-m", "soccermap.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for name in ("gen-data", "train", "evaluate", "ablate", "optimal-pass", "ppa-rank", "tendency"):
        assert name in r.stdout


def test_subcommand_help(capsys):
    code, out, _ = run(capsys, "train", "--help")
    assert code == 0 and "--batch-size" in out and "--seed" in out


def test_gen_data_is_byte_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        code, out, _ = run(capsys, "gen-data", "--n-passes", "50", "--frames-per-match", "40",
                           "--seed", "3", "--out-dir", tmp_path / d)
        assert code == 0
        assert keyed(out)["snapshots"] == "50"
    assert (tmp_path / "a" / "tracking.jsonl").read_bytes() == (tmp_path / "b" / "tracking.jsonl").read_bytes()
    run(capsys, "gen-data", "--n-passes", "50", "--frames-per-match", "40", "--seed", "4", "--out-dir", tmp_path / "c")
    assert (tmp_path / "c" / "tracking.jsonl").read_bytes() != (tmp_path / "a" / "tracking.jsonl").read_bytes()


def test_naive_evaluate_matches_closed_form(tmp_path, capsys):
    code, out, _ = run(capsys, "gen-data", "--n-passes", "3000", "--success-rate", "0.8", "--seed", "1",
                       "--out-dir", tmp_path)
    assert code == 0 and float(keyed(out)["success_rate"]) == pytest.approx(0.8, abs=1e-3)
    code, out, _ = run(capsys, "evaluate", "--data", tmp_path / "tracking.jsonl", "--model", "naive",
                       "--out-dir", tmp_path)
    assert code == 0
    rows = {(r[0], r[2]): float(r[3]) for r in table(out)[1:]}
    assert rows[("naive", "logloss")] == pytest.approx(0.5004, abs=0.002)
    assert rows[("naive", "ece")] < 0.01
    assert (tmp_path / "reliability_naive.csv").exists() and (tmp_path / "metrics.csv").exists()


def test_build_channels_writes_13_images(tmp_path, capsys, league):
    code, out, _ = run(capsys, "build-channels", "--data", league, "--index", "2", *SMALL[:2], "--out-dir", tmp_path)
    assert code == 0
    rows = table(out)
    assert rows[0] == ["channel", "name", "min", "max", "mean"] and len(rows) == 14
    values = np.load(tmp_path / "channels.npy")
    assert values.shape == (16, 12, 13)
    pgms = sorted(tmp_path.glob("channel_*.pgm"))
    assert len(pgms) == 13 and read_pgm(pgms[0]).shape == (12, 16)


def test_train_outputs(tmp_path, capsys, league):
    code, out, _ = run(capsys, "train", "--data", league, *SMALL, "--max-epochs", "1", "--batch-size", "8",
                       "--width-flips", "--out-dir", tmp_path)
    assert code == 0
    kv = keyed(out)
    assert kv["epochs"] == "1" and 0 < float(kv["test_logloss"]) < 5
    for name in ("model.smap", "history.csv", "history.png", "reliability.png"):
        assert (tmp_path / name).exists(), name
    assert load_checkpoint(tmp_path / "model.smap").spec.grid == (16, 12)


def test_ablate_table_columns(tmp_path, capsys, league):
    code, out, _ = run(capsys, "ablate", "--data", league, *SMALL, "--max-epochs", "1",
                       "--configs", "full,-FL-NLP,single-scale", "--out-dir", tmp_path)
    assert code == 0
    rows = table(out)
    assert rows[0][:6] == ["name", "SC", "UP", "FL", "NLP", "NF"]
    named = {r[0]: r for r in rows[1:]}
    assert named["full"][1:5] == ["1", "1", "1", "1"]
    assert named["-FL-NLP"][3:5] == ["0", "0"]
    assert named["single-scale"][1] == "0"
    assert int(named["-FL-NLP"][6]) < int(named["full"][6])
    with open(tmp_path / "ablation.csv") as f:
        assert list(csv.reader(f))[0] == rows[0]
    assert (tmp_path / "ablation.png").exists()


def test_surface_and_optimal_pass(tmp_path, capsys, league, small_model):
    code, out, _ = run(capsys, "surface", "--model", small_model, "--data", league, "--grid", "16x12",
                       "--out-dir", tmp_path)
    assert code == 0 and keyed(out)["kind"] == "probability"
    surf = read_surface_text(tmp_path / "surface.txt")
    assert surf.values.shape == (16, 12)
    assert float(keyed(out)["max"]) == pytest.approx(float(surf.values.max()), abs=1e-6)
    code, out, _ = run(capsys, "optimal-pass", "--model", small_model, "--data", league, "--index", "1",
                       "--out-dir", tmp_path)
    assert code == 0
    rows = table(out)
    assert rows[0] == ["player_id", "current_p", "best_x", "best_y", "best_p", "gain"]
    assert all(float(r[5]) >= 0 for r in rows[1:])
    assert (tmp_path / "optimal_pass.csv").exists() and (tmp_path / "suboptimal.csv").exists()


def test_optimal_position_unknown_player(tmp_path, capsys, league, small_model):
    code, _, err = run(capsys, "optimal-position", "--model", small_model, "--data", league, "--player", "Z:9",
                       "--out-dir", tmp_path)
    assert code == 2 and "Z:9" in err


def test_ppa_rank(tmp_path, capsys, league, small_model):
    code, out, _ = run(capsys, "ppa-rank", "--model", small_model, "--data", league, "--limit", "20",
                       "--top", "5", "--out-dir", tmp_path)
    assert code == 0
    rows = table(out)
    assert rows[0] == ["rank", "player_id", "passes", "ppa_per_90"] and 1 <= len(rows) - 1 <= 5
    per90 = [float(r[3]) for r in rows[1:]]
    assert per90 == sorted(per90, reverse=True)


def test_finetune_and_tendency(tmp_path, capsys, league):
    sel = tmp_path / "sel.smap"
    save_checkpoint(assemble(NetworkSpec(grid=(16, 12), filters=2, prediction_filters=2, upsampling_filters=2,
                                         head="softmax_selection"), seed=0), sel)
    code, out, _ = run(capsys, "finetune", "--model", sel, "--team", "long-ball", "--data", league,
                       "--grid", "16x12", "--max-epochs", "1", "--out-dir", tmp_path)
    assert code == 0 and keyed(out)["team"] == "long-ball"
    code, out, _ = run(capsys, "tendency", "--league-model", sel, "--team-model", tmp_path / "team.smap",
                       "--data", league, "--radius", "60", "--max-probes", "5", "--out-dir", tmp_path)
    assert code == 0
    kv = keyed(out)
    assert kv["probes"] == "5" and abs(float(kv["difference_sum"])) < 1e-5
    assert (tmp_path / "tendency.txt").exists() and (tmp_path / "tendency.pgm").exists()


def test_config_file_supplies_defaults(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("n_passes = 30\nframes_per_match = 40\nseed = 3\n")
    code, out, _ = run(capsys, "gen-data", "--config", cfg, "--out-dir", tmp_path / "a")
    assert code == 0 and keyed(out)["snapshots"] == "30"
    code, _, _ = run(capsys, "gen-data", "--n-passes", "30", "--frames-per-match", "40", "--seed", "3",
                     "--out-dir", tmp_path / "b")
    assert (tmp_path / "a" / "tracking.jsonl").read_bytes() == (tmp_path / "b" / "tracking.jsonl").read_bytes()
    # explicit flags win over the file
    code, out, _ = run(capsys, "gen-data", "--config", cfg, "--n-passes", "20", "--out-dir", tmp_path / "c")
    assert keyed(out)["snapshots"] == "20"
    cfg.write_text("learning_rate = 0.1\n")
    code, _, err = run(capsys, "gen-data", "--config", cfg, "--out-dir", tmp_path)
    assert code == 2 and "learning_rate" in err


@pytest.mark.parametrize("argv, message", [
    (["gen-data", "--styles", "tiki-taka"], "unknown style"),
    (["gen-data", "--success-rate", "1.5", "--n-passes", "20"], "success_rate"),
    (["build-channels", "--data", "missing.jsonl"], "missing.jsonl"),
    (["build-channels", "--data", "{league}", "--index", "9999"], "out of range"),
    (["surface", "--model", "{league}", "--data", "{league}"], "error"),
])
def test_invalid_input_exits_2(tmp_path, capsys, league, argv, message):
    argv = [a.replace("{league}", str(league)) for a in argv]
    code, _, err = run(capsys, *argv, "--out-dir", tmp_path)
    assert code == 2
    assert message in err


def test_bad_flags_exit_2(capsys):
    assert run(capsys, "train")[0] == 2  # --data missing
    assert run(capsys, "train", "--data", "x", "--grid", "big")[0] == 2
    assert run(capsys, "frobnicate")[0] == 2


def test_model_grid_mismatch(tmp_path, capsys, league, small_model):
    code, _, err = run(capsys, "evaluate", "--data", league, "--model", small_model, "--out-dir", tmp_path)
    assert code == 2 and "does not match" in err


def test_runtime_failures_exit_3(tmp_path, capsys, league, monkeypatch):
    from soccermap import training

    def diverge(*a, **k):
        raise training.TrainingDiverged("loss is nan at epoch 1")

    monkeypatch.setattr(training, "fit", diverge)
    code, _, err = run(capsys, "train", "--data", league, *SMALL, "--out-dir", tmp_path)
    assert code == 3 and "diverged" in err
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(capsys, "gen-data", "--n-passes", "5", "--out-dir", blocker / "sub")
    assert code == 3 and "error" in err


def test_tracking_from_cli_round_trips(tmp_path, capsys, league):
    snaps = read_tracking(league)
    assert sum(s.pass_event is not None for s in snaps) == 80
