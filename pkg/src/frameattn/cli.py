"""Command-line interface.

Subcommands: train, eval, cv, gradcheck, synth, visualize. Machine-readable
JSON goes to stdout, progress lines to stderr. Exit codes: 0 success,
1 usage, 2 data/format/config problems, 3 numeric failure. Every command is
deterministic given identical inputs, flags, and seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .data import SynthConfig, build_folds, load_feature_file, synth_generate, write_feature_file
from .errors import ConfigError, FrameAttnError, NumericError
from .evaluation import cross_validate, evaluate, export_attention
from .model import FanParams, Mode, backward, forward, init_params
from .numerics import finite_diff_gradient, relative_error, softmax_cross_entropy
from .training import (
    TrainConfig,
    afew_config,
    ckplus_config,
    load_checkpoint,
    save_checkpoint,
    synth_default_config,
    train,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_PRESETS = {
    "ck+": ckplus_config,
    "afew": afew_config,
    "synth-default": synth_default_config,
}


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _train_config(args) -> TrainConfig:
    overrides = {"seed": args.seed, "mode": Mode(args.mode.replace("-", "_"))}
    if args.epochs is not None:
        overrides["total_epochs"] = args.epochs
    if args.batch_size is not None:
        overrides["batch_size"] = args.batch_size
    if args.k is not None:
        overrides["k"] = args.k
    if args.lr is not None:
        overrides["schedule"] = [(0, args.lr)]
    if args.momentum is not None:
        overrides["momentum"] = args.momentum
    if args.weight_decay is not None:
        overrides["weight_decay"] = args.weight_decay
    return _PRESETS[args.preset](**overrides)


def _load_data(args):
    if args.data is not None:
        return load_feature_file(args.data)
    if args.preset == "synth-default":
        _log("no --data given; generating the default synthetic dataset")
        return synth_generate(SynthConfig(seed=args.seed))
    raise ConfigError(f"--data is required with preset '{args.preset}'")


def cmd_train(args) -> int:
    dataset = _load_data(args)
    config = _train_config(args)

    def on_epoch(stats):
        val = "" if stats.val_accuracy is None else f" val_acc={stats.val_accuracy:.4f}"
        _log(f"epoch {stats.epoch} lr={stats.lr:g} loss={stats.loss:.6f} "
             f"train_acc={stats.train_accuracy:.4f}{val}")

    params, history = train(dataset, config, on_epoch=on_epoch)
    save_checkpoint(params, args.out)
    if args.history:
        from .training import history_lines
        with open(args.history, "w") as f:
            f.write("\n".join(history_lines(history)) + "\n")
    _emit({
        "checkpoint": args.out,
        "mode": config.mode.value,
        "epochs": len(history),
        "final_loss": history[-1].loss if history else None,
        "final_train_accuracy": history[-1].train_accuracy if history else None,
    })
    return EXIT_OK


def cmd_eval(args) -> int:
    params = load_checkpoint(args.checkpoint)
    dataset = load_feature_file(args.data)
    report = evaluate(params, dataset, frame_mode=args.frames,
                      k=args.k, seed=args.seed)
    result = {"mode": params.mode.value, **report.to_dict()}
    if args.per_instance:
        from .model import forward, predict
        result["instances"] = [
            {"video_id": inst.video_id, "label": inst.label,
             "prediction": predict(forward(inst.features, params)[0])}
            for inst in dataset.instances
        ]
    _emit(result)
    return EXIT_OK


def cmd_cv(args) -> int:
    dataset = load_feature_file(args.data)
    config = _train_config(args)
    plan = build_folds(dataset, args.folds)
    reports, pooled = cross_validate(dataset, config, plan)
    _emit({
        "folds": [
            {
                "fold": i,
                "subjects": sorted(plan.subjects_in(i)),
                "report": r.to_dict(),
            }
            for i, r in enumerate(reports)
        ],
        "fold_mean_accuracy": sum(r.accuracy for r in reports) / len(reports),
        "pooled": pooled.to_dict(),
    })
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    failures = []
    results = []
    for i in range(args.configs):
        d = args.d if args.d else int(rng.choice([4, 8, 16]))
        n = args.n if args.n else int(rng.integers(1, 7))
        c = args.c if args.c else int(rng.choice([3, 7]))
        mode = Mode.FULL if i % 2 == 0 else Mode.SELF_ONLY
        features = rng.standard_normal((n, d))
        params = init_params(d, c, mode, seed=int(rng.integers(0, 2**31)))
        label = int(rng.integers(0, c))

        _, grads = backward(features, params, label)
        analytic = grads.flatten()
        if args.corrupt:
            analytic[0] += 1.0

        def loss_of(flat, f=features, p=params, y=label):
            cand = FanParams.from_flat(flat, p.feature_dim, p.num_classes, p.mode)
            return softmax_cross_entropy(forward(f, cand)[0], y)[0]

        fd = finite_diff_gradient(loss_of, params.flatten(), args.eps)
        err = relative_error(analytic, fd)
        worst = _worst_coordinate(analytic, fd, params)
        ok = err < args.tol
        results.append({"config": i, "mode": mode.value, "d": d, "n": n, "c": c,
                        "max_rel_err": err, "worst": worst, "ok": ok})
        _log(f"config {i}: mode={mode.value} d={d} n={n} c={c} "
             f"max_rel_err={err:.3e} {'ok' if ok else 'FAIL at ' + worst}")
        if not ok:
            failures.append((i, worst, err))
    _emit({"tol": args.tol, "eps": args.eps, "configs": results,
           "passed": not failures})
    if failures:
        for i, worst, err in failures:
            _log(f"FAIL config {i}: {worst} rel_err={err:.3e}")
        return EXIT_NUMERIC
    return EXIT_OK


def _worst_coordinate(analytic: np.ndarray, fd: np.ndarray, params) -> str:
    errs = np.abs(analytic - fd) / np.maximum(1e-8, np.abs(analytic) + np.abs(fd))
    flat_idx = int(np.argmax(errs))
    d, c = params.feature_dim, params.num_classes
    in_dim = params.class_w.shape[1]
    bounds = [("q0", d), ("q1", 2 * d), ("class_w", c * in_dim), ("class_b", c)]
    offset = 0
    for name, size in bounds:
        if flat_idx < offset + size:
            return f"{name}[{flat_idx - offset}]"
        offset += size
    return f"flat[{flat_idx}]"


def cmd_synth(args) -> int:
    config = SynthConfig(
        videos_per_class=args.videos_per_class,
        frames_min=args.frames_min,
        frames_max=args.frames_max,
        dim=args.dim,
        num_classes=args.classes,
        peak_frames=args.peaks,
        signal=args.signal,
        noise=args.noise,
        seed=args.seed,
        subject_count=args.subjects,
        terminal_peak=args.terminal_peak,
    )
    dataset = synth_generate(config)
    write_feature_file(dataset, args.out)
    _emit({
        "path": args.out,
        "instances": len(dataset.instances),
        "dim": dataset.dim,
        "classes": dataset.num_classes,
        "subjects": len(dataset.subjects()),
        "bytes": os.path.getsize(args.out),
    })
    return EXIT_OK


def cmd_visualize(args) -> int:
    params = load_checkpoint(args.checkpoint)
    dataset = load_feature_file(args.data)
    export_attention(params, dataset, args.out)
    csv_path = args.out if args.out.endswith(".csv") else args.out + ".csv"
    _emit({"csv": csv_path,
           "json": os.path.splitext(csv_path)[0] + ".json",
           "videos": len(dataset.instances)})
    return EXIT_OK


def _add_train_flags(p) -> None:
    p.add_argument("--preset", choices=sorted(_PRESETS), default="synth-default")
    p.add_argument("--mode", choices=["full", "self-only", "self_only"],
                   default="full")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--lr", type=float,
                   help="replace the preset schedule with a constant rate")
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="frameattn",
                     description="Train and evaluate attention-weighted "
                                 "frame aggregation models")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--data", help="feature file; omit to generate the "
                                  "synthetic default")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--history", help="also write per-epoch stats to this file")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a feature file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--frames", choices=["all", "sampled"], default="all")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--per-instance", action="store_true",
                   help="include per-video predictions in the JSON report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cv", help="person-independent cross-validation")
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int, default=10)
    _add_train_flags(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("gradcheck",
                       help="check analytic gradients against finite differences")
    p.add_argument("--configs", type=int, default=20)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--d", type=int, help="pin the feature dimension")
    p.add_argument("--n", type=int, help="pin the frame count")
    p.add_argument("--c", type=int, help="pin the class count")
    p.add_argument("--corrupt", action="store_true",
                   help="negative control: perturb the analytic gradient "
                        "and expect failure")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="generate a planted-peak feature file")
    p.add_argument("--out", required=True)
    p.add_argument("--videos-per-class", type=int, default=200)
    p.add_argument("--frames-min", type=int, default=8)
    p.add_argument("--frames-max", type=int, default=16)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--peaks", type=int, default=1)
    p.add_argument("--signal", type=float, default=8.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--subjects", type=int, default=30)
    p.add_argument("--terminal-peak", action="store_true",
                   help="place peaks at the end of each video")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("visualize",
                       help="export per-frame attention weights as CSV/JSON")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="CSV output path")
    p.set_defaults(func=cmd_visualize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except NumericError as e:
        _log(f"numeric error: {e}")
        return EXIT_NUMERIC
    except (FrameAttnError, OSError) as e:
        _log(f"error: {e}")
        return EXIT_DATA


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
