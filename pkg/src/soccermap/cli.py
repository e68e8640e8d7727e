"""Command-line entry point: ``soccermap <subcommand> [flags]``.

Every subcommand accepts ``--seed``, ``--config`` (flat key=value file whose
keys are flag names) and ``--out-dir``. Tab-delimited results go to stdout,
files go to the output directory. Exit codes: 0 ok, 2 invalid input,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from soccermap import io as smio
from soccermap.channels import CHANNEL_NAMES, DEFAULT_GRID, game_state, normalize_attack_direction
from soccermap.network import (
    ABLATIONS,
    HEADS,
    NetworkSpec,
    SoccerMap,
    ablation_specs,
    assemble,
    load_checkpoint,
    save_checkpoint,
)

log = logging.getLogger("soccermap")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RUNTIME = 3


class UsageError(ValueError):
    pass


# ----------------------------------------------------------------------------
# parsing helpers


def parse_grid(text: str) -> tuple[int, int]:
    try:
        l, h = (int(v) for v in str(text).lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 104x68, got {text!r}") from None
    return (l, h)


def parse_point(text: str) -> tuple[float, float]:
    try:
        x, y = (float(v) for v in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"point must look like x,y, got {text!r}") from None
    return (x, y)


def _floats(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v]


def _ints(text: str) -> list[int]:
    return [int(v) for v in str(text).split(",") if v]


def _names(text: str) -> list[str]:
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _emit(rows, header=None) -> None:
    if header:
        print("\t".join(header))
    for r in rows:
        print("\t".join(str(v) for v in r))


def _fmt(v: float) -> str:
    return f"{v:.6f}"


# ----------------------------------------------------------------------------
# shared loading


def _load_passes(args):
    snaps = smio.read_tracking(args.data, strict=not args.lenient)
    passes = [s for s in snaps if s.pass_event is not None]
    if not passes:
        raise UsageError(f"{args.data}: no snapshots with a pass event")
    return passes


def _splits(args, passes):
    from soccermap.training import PassDataset, split_dataset

    ds = PassDataset(passes, args.grid, angle_mode=args.angle_mode)
    train, val, test = split_dataset(ds, args.seed)
    return _augment(args, train), val, test


def _augment(args, train):
    from soccermap.training import with_width_flips

    return with_width_flips(train) if getattr(args, "width_flips", False) else train


def _model(path, args=None) -> SoccerMap:
    model = load_checkpoint(path)
    if args is not None and tuple(model.spec.grid) != tuple(args.grid):
        raise UsageError(f"model grid {model.spec.grid} does not match --grid {args.grid}")
    return model


def _snapshot(args):
    snaps = smio.read_tracking(args.data, strict=not args.lenient)
    if not 0 <= args.index < len(snaps):
        raise UsageError(f"--index {args.index} out of range (file has {len(snaps)} snapshots)")
    return snaps[args.index]


def _spec_from_args(args) -> NetworkSpec:
    return NetworkSpec(
        grid=args.grid,
        filters=args.filters,
        head=args.head,
        multi_scale=not args.no_multi_scale,
        learned_upsampling=not args.no_learned_upsampling,
        fusion_layer=not args.no_fusion_layer,
        nonlinear_prediction=not args.no_nonlinear_prediction,
        conv_layers_per_scale=args.conv_layers,
        prediction_filters=args.filters,
        upsampling_filters=args.filters,
    )


def _train_config(args, **overrides):
    from soccermap.training import TrainConfig

    kw = dict(learning_rate=args.lr, batch_size=args.batch_size, patience=args.patience,
              max_epochs=args.max_epochs, min_delta=args.min_delta, seed=args.seed)
    kw.update(overrides)
    return TrainConfig(**kw)


def _head_metrics(model: SoccerMap, data) -> dict:
    """Held-out metrics matching the model's head."""
    from soccermap.metrics import ece, logloss
    from soccermap.training import evaluate_loss, predict_at_destinations

    if model.spec.head == "sigmoid_probability":
        p = predict_at_destinations(model, data)
        return {"logloss": logloss(p, data.outcomes()), "ece": ece(p, data.outcomes()), "preds": p}
    if model.spec.head == "softmax_selection":
        return {"nll": evaluate_loss(model, data), "uniform_nll": math.log(data.grid[0] * data.grid[1])}
    return {"mse": evaluate_loss(model, data)}


# ----------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> None:
    from soccermap.synthgen import STYLES, generate_passes, rebalance

    unknown = [s for s in args.styles if s not in STYLES]
    if unknown:
        raise UsageError(f"unknown style(s) {unknown}; choose from {sorted(STYLES)}")
    snaps = generate_passes(args.n_passes, args.seed, [STYLES[s] for s in args.styles],
                            frames_per_match=args.frames_per_match)
    if args.success_rate is not None:
        snaps = rebalance(snaps, args.success_rate, args.seed)
    path = args.out_dir / args.out
    n = smio.write_tracking(path, snaps)
    rate = float(np.mean([s.pass_event.outcome for s in snaps]))
    _emit([("file", path.name), ("snapshots", n), ("success_rate", _fmt(rate))], ("key", "value"))


def cmd_build_channels(args) -> None:
    snap = _snapshot(args)
    state = game_state(snap, args.grid, args.angle_mode)
    np.save(args.out_dir / "channels.npy", state.values)
    rows = []
    for k, name in enumerate(CHANNEL_NAMES):
        ch = state.values[..., k]
        smio.write_pgm(args.out_dir / f"channel_{k:02d}_{name}.pgm", ch)
        rows.append((k, name, _fmt(float(ch.min())), _fmt(float(ch.max())), _fmt(float(ch.mean()))))
    _emit(rows, ("channel", "name", "min", "max", "mean"))


def cmd_train(args) -> None:
    from soccermap.plotting import plot_history, plot_reliability
    from soccermap.metrics import reliability
    from soccermap.training import fit

    passes = _load_passes(args)
    train, val, test = _splits(args, passes)
    model = assemble(_spec_from_args(args), seed=args.seed)
    model, hist = fit(model, train, val, _train_config(args))
    save_checkpoint(model, args.out_dir / args.model_out,
                    {"best_epoch": hist.best_epoch, "val_loss": hist.best_val, "seed": args.seed})
    hist.to_csv(args.out_dir / "history.csv")
    plot_history(args.out_dir / "history.png", hist.rows)
    m = _head_metrics(model, test)
    rows = [("epochs", len(hist.rows)), ("best_epoch", hist.best_epoch), ("val_loss", _fmt(hist.best_val))]
    rows += [(f"test_{k}", _fmt(v)) for k, v in m.items() if k != "preds"]
    if "preds" in m:
        plot_reliability(args.out_dir / "reliability.png", reliability(m["preds"], test.outcomes()))
    _emit(rows, ("key", "value"))


def cmd_grid_search(args) -> None:
    from soccermap.training import grid_search

    passes = _load_passes(args)
    train, val, test = _splits(args, passes)
    spec = _spec_from_args(args)
    configs = [_train_config(args, learning_rate=lr, batch_size=bs)
               for lr in args.learning_rates for bs in args.batch_sizes]
    best, model, rows = grid_search(train, val, configs, lambda: assemble(spec, seed=args.seed))
    save_checkpoint(model, args.out_dir / args.model_out,
                    {"learning_rate": best.learning_rate, "batch_size": best.batch_size, "seed": args.seed})
    header = ("learning_rate", "batch_size", "epochs", "best_epoch", "val_loss")
    table = [(r["learning_rate"], r["batch_size"], r["epochs"], r["best_epoch"], _fmt(r["val_loss"])) for r in rows]
    smio.write_rows(args.out_dir / "grid_search.csv", header, table)
    _emit(table, header)
    print(f"best\t{best.learning_rate}\t{best.batch_size}")


def cmd_evaluate(args) -> None:
    from soccermap.baselines import BASELINES, fit_baseline
    from soccermap.metrics import logloss, reliability
    from soccermap.plotting import plot_reliability
    from soccermap.synthgen import bayes_logloss

    passes = _load_passes(args)
    train, val, test = _splits(args, passes)
    rows = []
    for name in args.model:
        if name in BASELINES:
            fitted = fit_baseline(name, train, val, seed=args.seed)
            m = {"logloss": None, "preds": fitted.predict(test.snapshots)}
        else:
            model = _model(name, args)
            m = _head_metrics(model, test)
        label = Path(name).stem if name not in BASELINES else name
        if "preds" not in m:
            for k, v in m.items():
                rows.append((label, len(test), k, _fmt(v)))
            continue
        table = reliability(m["preds"], test.outcomes(), args.bins)
        table.to_csv(args.out_dir / f"reliability_{label}.csv")
        plot_reliability(args.out_dir / f"reliability_{label}.png", table, title=label)
        rows.append((label, len(test), "logloss", _fmt(logloss(m["preds"], test.outcomes()))))
        rows.append((label, len(test), "ece", _fmt(table.ece())))
    if args.bayes:
        rows.append(("oracle", len(test), "logloss", _fmt(bayes_logloss(test.snapshots))))
    header = ("model", "n", "metric", "value")
    smio.write_rows(args.out_dir / "metrics.csv", header, rows)
    _emit(rows, header)


def cmd_ablate(args) -> None:
    from soccermap.plotting import plot_ablation
    from soccermap.synthgen import bayes_logloss
    from soccermap.training import fit

    passes = _load_passes(args)
    train, val, test = _splits(args, passes)
    base = _spec_from_args(args)
    specs = ablation_specs(base, args.configs)
    header = ("name", "SC", "UP", "FL", "NLP", "NF", "params", "epochs", "val_loss", "test_logloss", "test_ece")
    rows = []
    for name, spec in specs.items():
        model, hist = fit(assemble(spec, seed=args.seed), train, val, _train_config(args))
        m = _head_metrics(model, test)
        f = spec.flags()
        rows.append((name, int(f["SC"]), int(f["UP"]), int(f["FL"]), int(f["NLP"]), f["NF"], model.param_count(),
                     len(hist.rows), _fmt(hist.best_val), _fmt(m["logloss"]), _fmt(m["ece"])))
        log.info("%s: test log-loss %.4f", name, m["logloss"])
    smio.write_rows(args.out_dir / "ablation.csv", header, rows)
    floor = bayes_logloss(test.snapshots)
    plot_ablation(args.out_dir / "ablation.png", [r[0] for r in rows], [float(r[9]) for r in rows], floor)
    _emit(rows, header)


def cmd_surface(args) -> None:
    from soccermap.plotting import plot_surface

    model = _model(args.model)
    snap = _snapshot(args)
    norm = normalize_attack_direction(snap)
    surf = model.forward(game_state(snap, model.spec.grid, args.angle_mode))
    surf.snapshot_id = f"{snap.match_id}@{snap.t:g}"
    smio.write_surface(args.out_dir / "surface", surf)
    plot_surface(args.out_dir / "surface.png", surf.values, norm, title=f"{surf.kind} {surf.snapshot_id}")
    v = surf.values
    _emit([("kind", surf.kind), ("min", _fmt(float(v.min()))), ("max", _fmt(float(v.max()))),
           ("mean", _fmt(float(v.mean())))], ("key", "value"))


def cmd_optimal_pass(args) -> None:
    from soccermap.applications import optimal_pass
    from soccermap.plotting import plot_surface

    model = _model(args.model)
    snap = _snapshot(args)
    res = optimal_pass(model, snap)
    res.to_csv(args.out_dir / "optimal_pass.csv")
    sub = [(pid, f"{x:.2f}", f"{y:.2f}", _fmt(g)) for pid, (x, y), g in res.suboptimal]
    smio.write_rows(args.out_dir / "suboptimal.csv", ("player_id", "x", "y", "gain"), sub)
    smio.write_surface(args.out_dir / "surface", res.surface)
    plot_surface(args.out_dir / "optimal_pass.png", res.surface.values, normalize_attack_direction(snap),
                 marks=[t.best_location for t in res.teammates])
    _emit([(t.player_id, _fmt(t.current_probability), f"{t.best_location[0]:.2f}", f"{t.best_location[1]:.2f}",
            _fmt(t.best_probability), _fmt(t.gain)) for t in res.teammates],
          ("player_id", "current_p", "best_x", "best_y", "best_p", "gain"))


def cmd_optimal_position(args) -> None:
    from soccermap.applications import optimal_position
    from soccermap.plotting import plot_surface

    model = _model(args.model)
    snap = _snapshot(args)
    player = args.player or normalize_attack_direction(snap).attackers[0].id
    try:
        res = optimal_position(model, snap, player)
    except KeyError:
        raise UsageError(f"no player {player!r} in snapshot {args.index}") from None
    half = res.gains.shape[0] // 2
    rows = []
    for a in range(res.gains.shape[0]):
        for b in range(res.gains.shape[1]):
            g = res.gains[a, b]
            rows.append((a - half, b - half, "" if np.isnan(g) else _fmt(g)))
    smio.write_rows(args.out_dir / "position_gains.csv", ("dx_cells", "dy_cells", "gain"), rows)
    best = res.surfaces[res.best_offset]
    plot_surface(args.out_dir / "optimal_position.png", best.values,
                 normalize_attack_direction(snap), marks=[res.best_location])
    _emit([("player_id", player), ("baseline_p", _fmt(res.baseline_probability)),
           ("best_dx_cells", res.best_offset[0]), ("best_dy_cells", res.best_offset[1]),
           ("best_gain", _fmt(res.best_gain))], ("key", "value"))


def cmd_ppa_rank(args) -> None:
    from soccermap.applications import minutes_played, pass_triples, ppa_ranking, write_ppa_csv

    model = _model(args.model)
    snaps = smio.read_tracking(args.data, strict=not args.lenient)
    minutes = minutes_played(snaps)
    passes = [s for s in snaps if s.pass_event is not None]
    if args.limit:
        passes = passes[: args.limit]
    records = ppa_ranking(pass_triples(model, passes), minutes)
    records = [r for r in records if r.n_passes >= args.min_passes]
    write_ppa_csv(args.out_dir / "ppa.csv", records)
    _emit([(k, r.player_id, r.n_passes, _fmt(r.ppa_per_90)) for k, r in enumerate(records[: args.top], 1)],
          ("rank", "player_id", "passes", "ppa_per_90"))


def cmd_finetune(args) -> None:
    from soccermap.training import FINETUNE_LR, PassDataset, finetune

    passes = [s for s in _load_passes(args) if s.pass_event.team_id == args.team]
    if not passes:
        raise UsageError(f"no passes for team {args.team!r}")
    base = _model(args.model, args)
    from soccermap.training import split_dataset

    ds = PassDataset(passes, base.spec.grid, angle_mode=args.angle_mode)
    train, val, _ = split_dataset(ds, args.seed, (0.8, 0.2, 0.0))
    train = _augment(args, train)
    lr = args.lr if args.lr_set else FINETUNE_LR
    model, hist = finetune(base, train, _train_config(args, learning_rate=lr), val=val)
    save_checkpoint(model, args.out_dir / args.model_out, {"team": args.team, "seed": args.seed})
    hist.to_csv(args.out_dir / "history.csv")
    _emit([("team", args.team), ("passes", len(passes)), ("epochs", len(hist.rows)),
           ("val_loss", _fmt(hist.best_val))], ("key", "value"))


def cmd_tendency(args) -> None:
    from soccermap.applications import mass_beyond, probes_near, team_tendency_maps
    from soccermap.network import Surface
    from soccermap.plotting import plot_surface

    league = _model(args.league_model)
    team = _model(args.team_model)
    snaps = smio.read_tracking(args.data, strict=not args.lenient)
    probes = probes_near(snaps, args.center, args.radius)
    if args.max_probes:
        probes = probes[: args.max_probes]
    if not probes:
        raise UsageError(f"no snapshots with the ball within {args.radius} m of {args.center}")
    res = team_tendency_maps(league, team, probes)
    smio.write_surface(args.out_dir / "tendency", Surface(res.difference, "selection_difference"))
    plot_surface(args.out_dir / "tendency.png", res.difference, center_zero=True,
                 marks=[args.center], title="team minus league selection")
    grid = league.spec.grid
    rows = [("probes", len(probes)),
            ("league_mass_beyond", _fmt(mass_beyond(res.league_mean, args.center, grid, args.far))),
            ("team_mass_beyond", _fmt(mass_beyond(res.team_mean, args.center, grid, args.far))),
            ("difference_sum", f"{float(res.difference.sum()):.3e}")]
    _emit(rows, ("key", "value"))


# ----------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("common")
    g.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    g.add_argument("--config", type=Path, help="key=value file supplying defaults for any flag")
    g.add_argument("--out-dir", type=Path, default=Path("."), help="directory for output files")
    g.add_argument("--threads", type=int, help="cap BLAS threads (overrides $SMAP_THREADS)")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _data(p, required=True) -> None:
    p.add_argument("--data", type=Path, required=required, help="tracking file (JSON lines)")
    p.add_argument("--lenient", action="store_true", help="ignore unknown fields instead of failing")
    p.add_argument("--grid", type=parse_grid, default=DEFAULT_GRID, help="grid as LxH (default 104x68)")
    p.add_argument("--angle-mode", choices=("goal_ball", "goal"), default="goal_ball",
                   help="reference for the carrier-velocity angle channel")


def _index(p) -> None:
    p.add_argument("--index", type=int, default=0, help="snapshot index within --data")


def _net(p) -> None:
    g = p.add_argument_group("network")
    g.add_argument("--filters", type=int, default=32, help="filters per convolution (default 32)")
    g.add_argument("--head", choices=HEADS, default="sigmoid_probability")
    g.add_argument("--conv-layers", type=int, default=2, help="5x5 conv layers per scale")
    g.add_argument("--no-multi-scale", action="store_true")
    g.add_argument("--no-learned-upsampling", action="store_true")
    g.add_argument("--no-fusion-layer", action="store_true")
    g.add_argument("--no-nonlinear-prediction", action="store_true")


def _optim(p, lr_default=1e-3) -> None:
    g = p.add_argument_group("optimization")
    g.add_argument("--lr", type=float, default=None, help=f"Adam learning rate (default {lr_default:g})")
    g.add_argument("--batch-size", type=int, default=16)
    g.add_argument("--max-epochs", type=int, default=20)
    g.add_argument("--patience", type=int, default=5)
    g.add_argument("--min-delta", type=float, default=0.001)
    g.add_argument("--width-flips", action="store_true",
                   help="add each training pass reflected across the long axis")
    p.set_defaults(lr_default=lr_default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="soccermap", description="Pass probability surfaces from tracking data.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.set_defaults(func=fn)
        _common(p)
        return p

    p = add("gen-data", cmd_gen_data, "generate a synthetic league as a tracking file")
    p.add_argument("--n-passes", type=int, default=8000)
    p.add_argument("--styles", type=_names, default=["balanced", "short-pass", "long-ball"])
    p.add_argument("--frames-per-match", type=int, default=200)
    p.add_argument("--success-rate", type=float, help="subsample to this fraction of successful passes")
    p.add_argument("--out", default="tracking.jsonl")

    p = add("build-channels", cmd_build_channels, "write the 13 input channels of one snapshot")
    _data(p)
    _index(p)

    p = add("train", cmd_train, "train a network on a tracking file")
    _data(p)
    _net(p)
    _optim(p)
    p.add_argument("--model-out", default="model.smap")

    p = add("grid-search", cmd_grid_search, "select learning rate and batch size on validation loss")
    _data(p)
    _net(p)
    _optim(p)
    p.add_argument("--learning-rates", type=_floats, default=[1e-3, 1e-4, 1e-5])
    p.add_argument("--batch-sizes", type=_ints, default=[1, 16, 32])
    p.add_argument("--model-out", default="model.smap")

    p = add("evaluate", cmd_evaluate, "held-out log-loss, ECE and reliability tables")
    _data(p)
    p.add_argument("--model", type=_names, default=["naive"],
                   help="comma list of checkpoints and/or naive, logistic, dense2")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--bayes", action="store_true", help="also report the oracle log-loss")

    p = add("ablate", cmd_ablate, "train the component ablations and tabulate them")
    _data(p)
    _net(p)
    _optim(p)
    p.add_argument("--configs", type=_names, default=list(ABLATIONS), help=f"subset of {','.join(ABLATIONS)}")

    for name, fn, help_ in (
        ("surface", cmd_surface, "predict a surface for one snapshot"),
        ("optimal-pass", cmd_optimal_pass, "best passing destination near each teammate"),
        ("optimal-position", cmd_optimal_position, "best nearby relocation for one player"),
    ):
        p = add(name, fn, help_)
        p.add_argument("--model", type=Path, required=True, help="checkpoint file")
        _data(p)
        _index(p)
        if name == "optimal-position":
            p.add_argument("--player", help="player id (default: first attacker)")

    p = add("ppa-rank", cmd_ppa_rank, "rank passers by pass completion added per 90 minutes")
    p.add_argument("--model", type=Path, required=True)
    _data(p)
    p.add_argument("--limit", type=int, default=0, help="only score the first N passes")
    p.add_argument("--min-passes", type=int, default=1)
    p.add_argument("--top", type=int, default=20)

    p = add("finetune", cmd_finetune, "continue training a checkpoint on one team's passes")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--team", required=True)
    _data(p)
    _optim(p, lr_default=1e-5)
    p.add_argument("--model-out", default="team.smap")

    p = add("tendency", cmd_tendency, "team minus league selection heatmap near a ball location")
    p.add_argument("--league-model", type=Path, required=True)
    p.add_argument("--team-model", type=Path, required=True)
    _data(p)
    p.add_argument("--center", type=parse_point, default=(52.0, 34.0), help="ball location x,y")
    p.add_argument("--radius", type=float, default=10.0)
    p.add_argument("--far", type=float, default=30.0, help="distance for the long-pass mass summary")
    p.add_argument("--max-probes", type=int, default=0)
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults taken from ``--config``; explicit flags still win."""
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    values = smio.read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    unknown = sorted(k for k in values if k not in known or k in ("config", "func", "help"))
    if unknown:
        raise UsageError(f"{args.config}: unknown key(s) {', '.join(unknown)}")
    converted = {}
    for k, v in values.items():
        action = known[k]
        if action.type is not None and not isinstance(v, bool):
            v = action.type(str(v))
        if action.choices is not None and v not in action.choices:
            raise UsageError(f"{args.config}: {k}={v!r} not in {list(action.choices)}")
        converted[k] = v
    sub.set_defaults(**converted)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
    except SystemExit as err:  # argparse usage errors
        return EXIT_OK if err.code == 0 else EXIT_INVALID
    except (UsageError, smio.FormatError, argparse.ArgumentTypeError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if hasattr(args, "lr"):
        args.lr_set = args.lr is not None
        if args.lr is None:
            args.lr = args.lr_default
    from soccermap.autograd import ContractError
    from soccermap.network import CheckpointError
    from soccermap.training import TrainingDiverged

    try:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        with smio.thread_limit(args.threads):
            args.func(args)
    except TrainingDiverged as err:
        print(f"error: training diverged: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    except (UsageError, smio.FormatError, CheckpointError, ContractError, FileNotFoundError, KeyError,
            ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as err:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
