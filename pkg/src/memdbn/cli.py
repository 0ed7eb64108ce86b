"""Command-line surface: train, eval, sweep, fit-device, generate,
inspect, table1. Every subcommand is reproducible from its arguments;
the seed defaults to the documented constant 1234, never wall-clock.
Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import device as dev
from . import harness
from .dbn import Dbn, DbnConfig
from .harness import (DEFAULT_SEED, RunConfig, SweepConfig, desk_profile,
                      full_profile, run_single, run_sweep, table1_check,
                      emit_plots, write_count_stats)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors are 1
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="memdbn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_profile=True):
        p.add_argument("--config", help="JSON config file (flags override its values)")
        p.add_argument("--seed", type=int, default=None, help=f"RNG seed (default {DEFAULT_SEED})")
        p.add_argument("--out", default="runs/out", help="output directory")
        if with_profile:
            p.add_argument("--preset", default=None, help="device preset name")
            p.add_argument("--profile", choices=("desk", "full"), default="desk")
            p.add_argument("--cd-th", type=int, default=None)
            p.add_argument("--epochs-greedy", type=int, default=None)
            p.add_argument("--epochs-finetune", type=int, default=None)
            p.add_argument("--data-dir", default="data/mnist")
            p.add_argument("--no-eval-sampling", action="store_true",
                           help="skip per-epoch sampling-mode evaluation")

    p_train = sub.add_parser("train", help="train a network and write checkpoint + metrics")
    common(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data-dir", default="data/mnist")
    p_eval.add_argument("--mode", choices=("det", "sample"), default="det")
    p_eval.add_argument("--repeats", type=int, default=1)
    p_eval.add_argument("--repeats-curve", default=None,
                        help="comma list of repeat counts; writes a repeats,accuracy CSV")
    p_eval.add_argument("--test-size", type=int, default=None)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--out", default=None)

    p_sweep = sub.add_parser("sweep", help="sweep one parameter over seeded trials")
    common(p_sweep)
    p_sweep.add_argument("--param", choices=harness.SWEEP_PARAMS)
    p_sweep.add_argument("--values", help="comma-separated sweep values")
    p_sweep.add_argument("--trials", type=int, default=3)
    p_sweep.add_argument("--workers", type=int, default=None,
                         help=f"worker processes (or ${harness.WORKERS_ENV})")

    p_fit = sub.add_parser("fit-device", help="fit the device model to a pulse-trace CSV")
    p_fit.add_argument("--trace", required=True, help="CSV with header pulse_index,direction,g_after")
    p_fit.add_argument("--out", default=None, help="write fitted parameters to this JSON file")

    p_gen = sub.add_parser("generate", help="generate digit images from a fine-tuned checkpoint")
    p_gen.add_argument("--checkpoint", required=True)
    p_gen.add_argument("--label", type=int, required=True)
    p_gen.add_argument("--count", type=int, default=1)
    p_gen.add_argument("--seed", type=int, default=None)
    p_gen.add_argument("--out", default="runs/generated")

    p_inspect = sub.add_parser("inspect", help="summarize a checkpoint")
    p_inspect.add_argument("checkpoint")

    p_t1 = sub.add_parser("table1", help="run the composite relaxed-device spec point")
    common(p_t1)
    p_t1.add_argument("--override", action="append", default=[],
                      help="device field override, e.g. --override yield_fraction=0.5")

    p_plot = sub.add_parser("plot", help="emit tidy CSV + gnuplot script for a figure")
    p_plot.add_argument("--figure", required=True, help=f"one of {', '.join(sorted(harness.FIGURES))}")
    p_plot.add_argument("--source", required=True, help="run dir / sweep dir / results CSV")
    p_plot.add_argument("--out", default="runs/plots")
    return parser


def _load_config_file(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}")


def _run_config_from_args(args) -> RunConfig:
    profile = desk_profile if args.profile == "desk" else full_profile
    overrides: dict = {}
    if args.config:
        file_cfg = _load_config_file(args.config)
        dbn_part = file_cfg.pop("dbn", {})
        overrides.update(dbn_part)
        overrides.update(file_cfg)
    if args.preset is not None:
        overrides["preset"] = args.preset
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.cd_th is not None:
        overrides["cd_th"] = args.cd_th
    if args.epochs_greedy is not None:
        overrides["greedy_epochs"] = args.epochs_greedy
    if args.epochs_finetune is not None:
        overrides["finetune_epochs"] = args.epochs_finetune
    if "layer_sizes" in overrides:
        overrides["layer_sizes"] = tuple(overrides["layer_sizes"])
    cfg = profile(**overrides)
    cfg = replace(cfg, data_dir=args.data_dir)
    if args.no_eval_sampling:
        cfg = replace(cfg, eval_sampling=False)
    if cfg.dbn.finetune_epochs == 0:
        cfg = replace(cfg, finetune=False)
    return cfg


def _cmd_train(args) -> int:
    cfg = _run_config_from_args(args)
    result = run_single(cfg, out_dir=args.out)
    print(f"best_acc_det={result.best_acc_det:.4f} best_acc_s50={result.best_acc_s50:.4f} "
          f"wall_s={result.wall_s:.1f}")
    print(f"artifacts under {args.out}")
    return 0


def _load_test_split(data_dir, test_size, seed):
    from .dataset import binarize_dataset, load_mnist, subset
    test = binarize_dataset(load_mnist(data_dir, "test"))
    if test_size is not None:
        test = subset(test, test_size, seed=seed)
    return test


def _cmd_eval(args) -> int:
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    dbn = Dbn.load(args.checkpoint)
    test = _load_test_split(args.data_dir, args.test_size, seed)
    rng = np.random.default_rng(seed)
    mode = "deterministic" if args.mode == "det" else "sampling"
    if args.repeats_curve:
        repeats_list = [int(x) for x in args.repeats_curve.split(",") if x]
        rows = [(r, dbn.evaluate(test.images, test.labels, "sampling", repeats=r, rng=rng))
                for r in repeats_list]
        for r, acc in rows:
            print(f"repeats={r} accuracy={acc:.4f}")
        if args.out:
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
            with open(args.out, "w") as fh:
                fh.write("repeats,accuracy\n")
                for r, acc in rows:
                    fh.write(f"{r},{acc:.10g}\n")
        return 0
    acc = dbn.evaluate(test.images, test.labels, mode, repeats=args.repeats, rng=rng)
    print(f"accuracy={acc:.4f} mode={args.mode} repeats={args.repeats}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _run_config_from_args(args)
    param = args.param
    values = args.values
    if args.config and (param is None or values is None):
        file_cfg = _load_config_file(args.config)
        param = param or file_cfg.get("param")
        values = values or file_cfg.get("values")
    if param is None or values is None:
        raise UsageError("sweep needs --param and --values (flags or config file)")
    if isinstance(values, str):
        values = [v for v in values.split(",") if v]
        if param != "device_preset":
            values = [float(v) if "." in v or "e" in v.lower() else int(v) for v in values]
    sweep = SweepConfig(base=cfg, param=param, values=list(values),
                        trials=args.trials, workers=args.workers, out_dir=args.out)
    rows = run_sweep(sweep)
    failed = [r for r in rows if r["error"]]
    print(f"{len(rows)} runs, {len(failed)} failed; results under {args.out}")
    return 0


def _cmd_fit_device(args) -> int:
    trace = dev.PulseTrace.from_csv(args.trace)
    fit = dev.fit_device_model(trace)
    print(f"g_max={fit.params.g_max:.6g} g_min={fit.params.g_min:.6g} "
          f"n_p={fit.params.n_p} n_d={fit.params.n_d} "
          f"alpha_p={fit.params.alpha_p:.4g} alpha_d={fit.params.alpha_d:.4g} "
          f"residual={fit.residual:.4g}")
    if args.out:
        fit.params.to_json(args.out)
        print(f"parameters written to {args.out}")
    return 0


def write_pgm(path, probabilities, side: int = 28) -> None:
    """8-bit binary PGM (P5) of a probability image."""
    pixels = np.clip(np.asarray(probabilities) * 255.0 + 0.5, 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{side} {side}\n255\n".encode())
        fh.write(pixels.tobytes())


def _cmd_generate(args) -> int:
    dbn = Dbn.load(args.checkpoint)
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    rng = np.random.default_rng(seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        image = dbn.generate(args.label, rng)
        path = out / f"digit{args.label}-{i:03d}.pgm"
        write_pgm(path, image)
    print(f"wrote {args.count} PGM images under {out}")
    return 0


def _cmd_inspect(args) -> int:
    dbn = Dbn.load(args.checkpoint)
    cfg = dbn.config
    print(f"layers: {cfg.layer_sizes} (labels {cfg.label_count})  preset: {cfg.preset}")
    print(f"device: {dbn.params}")
    print(f"trained: {dbn.trained}  finetuned: {dbn.finetuned}  cd_th: {cfg.cd_th}")
    for name, layer in dbn.layers.items():
        g = layer.array.g
        hist, edges = np.histogram(g, bins=8, range=(dbn.params.g_min, dbn.params.g_max))
        bars = " ".join(f"{int(n)}" for n in hist)
        print(f"  {name}: {layer.m}x{layer.n}"
              f"{' (pair)' if layer.array.is_pair else ''}  g in [{g.min():.4g}, {g.max():.4g}]"
              f"  histogram: [{bars}]")
    max_w, med_w, zero_f = write_count_stats(dbn)
    print(f"write counts: max={max_w} median={med_w:.1f} zero-fraction={zero_f:.3f}")
    return 0


def _cmd_table1(args) -> int:
    overrides = {}
    for item in args.override:
        if "=" not in item:
            raise UsageError(f"bad --override {item!r}, expected field=value")
        key, value = item.split("=", 1)
        overrides[key] = float(value) if "." in value or "e" in value.lower() else int(value)
    cfg = _run_config_from_args(args)
    report = table1_check(overrides or None, base=cfg, out_dir=args.out)
    status = "PASS" if report["passed"] else "FAIL"
    print(f"{status}: best_acc_det={report['best_acc_det']:.4f} "
          f"vs bar {report['accuracy_bar']:.2f} (max writes {report['max_writes']})")
    return 0


def _cmd_plot(args) -> int:
    paths = emit_plots(args.source, args.figure, args.out)
    print(f"wrote {paths['csv']} and {paths['gp']}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "fit-device": _cmd_fit_device,
    "generate": _cmd_generate,
    "inspect": _cmd_inspect,
    "table1": _cmd_table1,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
