"""Experiment orchestration: single training runs with per-epoch
evaluation, parameter sweeps over device non-idealities on a worker
pool, write-count statistics, the composite device-spec check, and
emission of tidy CSVs plus gnuplot scripts for the standard figures.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np

from .dataset import Dataset, binarize_dataset, load_mnist, subset
from .dbn import Dbn, DbnConfig, EpochMetrics

DEFAULT_SEED = 1234
WORKERS_ENV = "MEMDBN_WORKERS"

SWEEP_PARAMS = (
    "cd_th",
    "conductance_levels",
    "nonlinearity_symmetric",
    "nonlinearity_asymmetric",
    "c2c_gamma",
    "d2d_sigma",
    "yield",
    "read_noise",
    "device_preset",
)

METRICS_HEADER = ("phase", "epoch", "layer", "recon_error", "test_acc_det", "test_acc_s50", "pulses")
LAYER_METRICS_HEADER = ("epoch", "layer", "mean_recon_error", "pulses_this_epoch")
RESULTS_HEADER = ("param", "value", "trial", "seed", "best_acc_det", "best_acc_s50",
                  "final_acc_det", "median_writes", "max_writes", "zero_frac", "wall_s", "error")

# Composite device spec point: 20 levels, on/off 3, nonlinearity 10 with
# asymmetry 2, 30% cycle-to-cycle, d2d sigma 5, 90% yield, 10% read noise.
TABLE1_DEVICE = {
    "g_max": 3.0, "g_min": 1.0, "n_p": 20, "n_d": 20,
    "alpha_p": 10.0, "alpha_d": 5.0, "gamma": 0.3,
    "sigma_alpha_p": 5.0, "sigma_alpha_d": 5.0,
    "yield_fraction": 0.9, "read_noise_frac": 0.1,
}
TABLE1_ACCURACY_BAR = 0.85  # desk-scale proxy for the full-scale 95% bar


@dataclass
class RunConfig:
    """A complete, reproducible training-plus-evaluation recipe."""

    dbn: DbnConfig = field(default_factory=DbnConfig)
    train_size: int | None = None       # None -> whole split
    test_size: int | None = None
    finetune: bool = True
    eval_each_epoch: bool = True
    eval_sampling: bool = True          # also track sampling-repeats accuracy
    eval_repeats: int = 50
    binarize_threshold: int = 128
    data_dir: str = "data/mnist"

    def fingerprint(self, seed: int) -> str:
        payload = {k: v for k, v in asdict(self).items() if k != "data_dir"}
        payload["seed"] = seed
        blob = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def desk_profile(**overrides) -> RunConfig:
    """Desk-scale default: small net, 10k/2k stratified MNIST, 5+5 epochs,
    counter threshold scaled down with the reduced per-epoch volume."""
    dbn = DbnConfig(layer_sizes=(784, 100, 110, 200), greedy_epochs=5,
                    finetune_epochs=5, cd_th=16, seed=DEFAULT_SEED)
    cfg = RunConfig(dbn=dbn, train_size=10_000, test_size=2_000)
    return _apply_overrides(cfg, overrides)


def full_profile(**overrides) -> RunConfig:
    """Full-scale run matching the reference experiments (long)."""
    dbn = DbnConfig(layer_sizes=(784, 500, 510, 2000), greedy_epochs=30,
                    finetune_epochs=30, cd_th=64, seed=DEFAULT_SEED)
    cfg = RunConfig(dbn=dbn, train_size=None, test_size=None)
    return _apply_overrides(cfg, overrides)


def _apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    dbn_fields = set(DbnConfig.__dataclass_fields__)
    dbn_kwargs = {k: v for k, v in overrides.items() if k in dbn_fields}
    run_kwargs = {k: v for k, v in overrides.items() if k not in dbn_fields}
    if dbn_kwargs:
        cfg = replace(cfg, dbn=replace(cfg.dbn, **dbn_kwargs))
    if run_kwargs:
        cfg = replace(cfg, **run_kwargs)
    return cfg


@dataclass
class RunResult:
    fingerprint: str
    seed: int
    metrics: list[EpochMetrics]
    best_acc_det: float
    best_acc_s50: float
    final_acc_det: float
    max_writes: int
    median_writes: float
    zero_frac: float
    wall_s: float

    def summary(self) -> dict:
        return {
            "fingerprint": self.fingerprint, "seed": self.seed,
            "best_acc_det": self.best_acc_det, "best_acc_s50": self.best_acc_s50,
            "final_acc_det": self.final_acc_det, "max_writes": self.max_writes,
            "median_writes": self.median_writes, "zero_frac": self.zero_frac,
            "wall_s": self.wall_s,
        }


def load_run_data(config: RunConfig) -> tuple[Dataset, Dataset]:
    """Binarized (and optionally stratified-subset) train/test splits."""
    train = binarize_dataset(load_mnist(config.data_dir, "train"), config.binarize_threshold)
    test = binarize_dataset(load_mnist(config.data_dir, "test"), config.binarize_threshold)
    if config.train_size is not None:
        train = subset(train, config.train_size, seed=config.dbn.seed)
    if config.test_size is not None:
        test = subset(test, config.test_size, seed=config.dbn.seed)
    return train, test


def write_count_stats(dbn: Dbn) -> tuple[int, float, float]:
    """(max, median, zero-fraction) of write pulses over every physical
    device of every layer (differential pairs count per branch)."""
    counts = np.concatenate([layer.array.write_counts.ravel()
                             for layer in dbn.layers.values()])
    return int(counts.max()), float(np.median(counts)), float(np.mean(counts == 0))


def run_single(config: RunConfig, seed: int | None = None,
               out_dir=None, train=None, test=None) -> RunResult:
    """One training run: greedy learning, optional wake-sleep fine-tune,
    per-epoch evaluation, artifacts persisted under ``out_dir``.

    ``seed`` overrides the config seed (sweeps derive one per trial);
    pre-loaded datasets can be passed to skip re-reading the files.
    """
    if seed is not None:
        config = replace(config, dbn=replace(config.dbn, seed=int(seed)))
    seed = config.dbn.seed
    if train is None or test is None:
        train, test = load_run_data(config)
    t0 = time.time()
    rng = np.random.default_rng(seed)
    dbn = Dbn(config.dbn, rng)

    def hook(row: EpochMetrics, net: Dbn):
        if not config.eval_each_epoch:
            return
        row.acc_det = net.evaluate(test.images, test.labels, "deterministic")
        if config.eval_sampling:
            row.acc_s50 = net.evaluate(test.images, test.labels, "sampling",
                                       repeats=config.eval_repeats)

    metrics = dbn.greedy_train(train.images, train.labels, rng, epoch_hook=hook)
    if config.finetune and config.dbn.finetune_epochs > 0:
        metrics += dbn.wake_sleep_finetune(train.images, train.labels, rng, epoch_hook=hook)
    if not config.eval_each_epoch:
        final_det = dbn.evaluate(test.images, test.labels, "deterministic")
        metrics[-1].acc_det = final_det
    det_accs = [m.acc_det for m in metrics if not math.isnan(m.acc_det)]
    s50_accs = [m.acc_s50 for m in metrics if not math.isnan(m.acc_s50)]
    max_w, med_w, zero_f = write_count_stats(dbn)
    result = RunResult(
        fingerprint=config.fingerprint(seed), seed=seed, metrics=metrics,
        best_acc_det=max(det_accs) if det_accs else float("nan"),
        best_acc_s50=max(s50_accs) if s50_accs else float("nan"),
        final_acc_det=det_accs[-1] if det_accs else float("nan"),
        max_writes=max_w, median_writes=med_w, zero_frac=zero_f,
        wall_s=time.time() - t0,
    )
    if out_dir is not None:
        persist_run(result, dbn, out_dir)
    return result


def _fmt(x) -> str:
    if isinstance(x, float):
        return "" if math.isnan(x) else f"{x:.10g}"
    return str(x)


def write_metrics_csv(metrics: list[EpochMetrics], path) -> None:
    """Training log in the `phase,epoch,layer,...` schema."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for m in metrics:
            writer.writerow([m.phase, m.epoch, m.layer, _fmt(m.recon_error),
                             _fmt(m.acc_det), _fmt(m.acc_s50), m.pulses])


def write_layer_metrics_csv(metrics: list[EpochMetrics], path) -> None:
    """Per-layer epoch log in the `epoch,layer,...` schema."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LAYER_METRICS_HEADER)
        for m in metrics:
            writer.writerow([m.epoch, m.layer, _fmt(m.recon_error), m.pulses])


def export_write_counts_csv(dbn: Dbn, directory) -> list[Path]:
    """Per-device write counts, one CSV matrix per layer plane."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, layer in dbn.layers.items():
        counts = layer.array.write_counts
        for plane in range(counts.shape[0]):
            suffix = "" if counts.shape[0] == 1 else ("-pos" if plane == 0 else "-neg")
            path = directory / f"write_counts_{name}{suffix}.csv"
            np.savetxt(path, counts[plane], fmt="%d", delimiter=",")
            paths.append(path)
    return paths


def persist_run(result: RunResult, dbn: Dbn, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(result.metrics, out_dir / "metrics.csv")
    write_layer_metrics_csv(result.metrics, out_dir / "layer_metrics.csv")
    (out_dir / "result.json").write_text(json.dumps(result.summary(), sort_keys=True, indent=2) + "\n")
    dbn.save(out_dir / "checkpoint.mdbn")
    export_write_counts_csv(dbn, out_dir / "write_counts")


# ---------------------------------------------------------------------- sweeps

@dataclass
class SweepConfig:
    """A one-parameter sweep: ``trials`` seeded runs per value."""

    base: RunConfig
    param: str
    values: list
    trials: int = 3
    workers: int | None = None
    out_dir: str | None = None

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ValueError(f"unknown sweep parameter {self.param!r}; known: {', '.join(SWEEP_PARAMS)}")
        if not self.values:
            raise ValueError("sweep value list is empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


def apply_sweep_value(config: RunConfig, param: str, value) -> RunConfig:
    """Return a copy of ``config`` with one swept parameter applied."""
    dbn = config.dbn
    overrides = dict(dbn.device_overrides)
    if param == "cd_th":
        dbn = replace(dbn, cd_th=int(value))
    elif param == "conductance_levels":
        overrides.update(n_p=int(value), n_d=int(value))
        dbn = replace(dbn, device_overrides=overrides)
    elif param == "nonlinearity_symmetric":
        overrides.update(alpha_p=float(value), alpha_d=float(value))
        dbn = replace(dbn, device_overrides=overrides)
    elif param == "nonlinearity_asymmetric":
        overrides.update(alpha_p=float(value))
        dbn = replace(dbn, device_overrides=overrides)
    elif param == "c2c_gamma":
        overrides.update(gamma=float(value))
        dbn = replace(dbn, device_overrides=overrides)
    elif param == "d2d_sigma":
        overrides.update(sigma_alpha_p=float(value), sigma_alpha_d=float(value))
        dbn = replace(dbn, device_overrides=overrides)
    elif param == "yield":
        overrides.update(yield_fraction=float(value))
        dbn = replace(dbn, device_overrides=overrides)
    elif param == "read_noise":
        overrides.update(read_noise_frac=float(value))
        dbn = replace(dbn, device_overrides=overrides)
    elif param == "device_preset":
        dbn = replace(dbn, preset=str(value))
    else:
        raise ValueError(f"unknown sweep parameter {param!r}")
    return replace(config, dbn=dbn)


def derive_seed(base_seed: int, point_index: int, trial: int) -> int:
    """Stable per-(point, trial) seed, independent of execution order."""
    seq = np.random.SeedSequence([int(base_seed), int(point_index), int(trial)])
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def _sweep_point(args):
    sweep_dict, point_index, trial = args
    sweep = _sweep_from_dict(sweep_dict)
    value = sweep.values[point_index]
    seed = derive_seed(sweep.base.dbn.seed, point_index, trial)
    row = {"param": sweep.param, "value": value, "trial": trial, "seed": seed,
           "best_acc_det": float("nan"), "best_acc_s50": float("nan"),
           "final_acc_det": float("nan"), "median_writes": float("nan"),
           "max_writes": float("nan"), "zero_frac": float("nan"),
           "wall_s": float("nan"), "error": ""}
    try:
        config = apply_sweep_value(sweep.base, sweep.param, value)
        out_dir = None
        if sweep.out_dir is not None:
            out_dir = Path(sweep.out_dir) / f"{sweep.param}-{value}-t{trial}"
        result = run_single(config, seed, out_dir=out_dir)
        row.update(best_acc_det=result.best_acc_det, best_acc_s50=result.best_acc_s50,
                   final_acc_det=result.final_acc_det, median_writes=result.median_writes,
                   max_writes=result.max_writes, zero_frac=result.zero_frac,
                   wall_s=result.wall_s)
    except Exception as exc:  # noqa: BLE001 - crash isolation per run
        row["error"] = f"{type(exc).__name__}: {exc}"
    return point_index, trial, row


def _sweep_to_dict(sweep: SweepConfig) -> dict:
    d = asdict(sweep)
    return d


def _sweep_from_dict(d: dict) -> SweepConfig:
    base = d["base"]
    dbn_kwargs = dict(base["dbn"])
    dbn_kwargs["layer_sizes"] = tuple(dbn_kwargs["layer_sizes"])
    if isinstance(dbn_kwargs.get("cd_th"), list):
        dbn_kwargs["cd_th"] = tuple(dbn_kwargs["cd_th"])
    run_kwargs = {k: v for k, v in base.items() if k != "dbn"}
    return SweepConfig(base=RunConfig(dbn=DbnConfig(**dbn_kwargs), **run_kwargs),
                       param=d["param"], values=d["values"], trials=d["trials"],
                       workers=d.get("workers"), out_dir=d.get("out_dir"))


def worker_count(requested: int | None) -> int:
    env = os.environ.get(WORKERS_ENV)
    if requested is not None:
        return max(1, int(requested))
    if env:
        return max(1, int(env))
    return 1


def run_sweep(sweep: SweepConfig) -> list[dict]:
    """Run trials x points, in parallel when workers > 1; rows are merged
    in (point, trial) order so results never depend on scheduling. A
    failing run taints only its own row (``error`` column)."""
    jobs = [(_sweep_to_dict(sweep), p, t)
            for p in range(len(sweep.values)) for t in range(sweep.trials)]
    workers = worker_count(sweep.workers)
    if workers == 1:
        done = [_sweep_point(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_sweep_point, jobs))
    done.sort(key=lambda item: (item[0], item[1]))
    rows = [row for _p, _t, row in done]
    if sweep.out_dir is not None:
        out = Path(sweep.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_results_csv(rows, out / "results.csv")
    return rows


def write_results_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_HEADER)
        for row in rows:
            writer.writerow([_fmt(row[k]) for k in RESULTS_HEADER])


def read_results_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader)


# ----------------------------------------------------------------- spec point

def table1_check(overrides: dict | None = None, base: RunConfig | None = None,
                 out_dir=None) -> dict:
    """Train at the composite relaxed-device spec point and report
    best-epoch accuracy against the desk-scale proxy bar."""
    config = base if base is not None else desk_profile()
    device = dict(TABLE1_DEVICE)
    if overrides:
        device.update(overrides)
    config = replace(config, dbn=replace(config.dbn, preset="ideal-linear",
                                         device_overrides=device))
    result = run_single(config, out_dir=out_dir)
    report = {
        "device": device,
        "best_acc_det": result.best_acc_det,
        "best_acc_s50": result.best_acc_s50,
        "max_writes": result.max_writes,
        "accuracy_bar": TABLE1_ACCURACY_BAR,
        "passed": bool(result.best_acc_det >= TABLE1_ACCURACY_BAR),
    }
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "table1_report.json").write_text(
            json.dumps(report, sort_keys=True, indent=2) + "\n")
    return report


# --------------------------------------------------------------------- plots

FIGURES = {
    "fig2a": "reconstruction error vs epoch per layer (needs a run metrics.csv)",
    "fig2d": "accuracy vs sampling repeats (needs a repeats,accuracy CSV)",
    "fig3a": "accuracy vs epoch per cd_th (needs a cd_th sweep directory)",
    "fig3b": "write-count histogram (needs a run write_counts directory)",
    "fig4b": "accuracy vs conductance levels (needs a conductance_levels sweep results.csv)",
    "fig4c": "accuracy vs symmetric nonlinearity (needs a nonlinearity_symmetric sweep results.csv)",
    "fig4d": "accuracy vs asymmetric nonlinearity (needs a nonlinearity_asymmetric sweep results.csv)",
    "fig4e": "accuracy vs cycle-to-cycle variation (needs a c2c_gamma sweep results.csv)",
    "fig4f": "accuracy vs device-to-device variation (needs a d2d_sigma sweep results.csv)",
    "fig4g": "accuracy vs yield (needs a yield sweep results.csv)",
    "fig4h": "accuracy vs read noise (needs a read_noise sweep results.csv)",
    "fig5f": "accuracy per device preset (needs a device_preset sweep results.csv)",
}
_FIG4_PARAM = {
    "fig4b": "conductance_levels", "fig4c": "nonlinearity_symmetric",
    "fig4d": "nonlinearity_asymmetric", "fig4e": "c2c_gamma",
    "fig4f": "d2d_sigma", "fig4g": "yield", "fig4h": "read_noise",
    "fig5f": "device_preset",
}


def _gp_header(fig_id: str, xlabel: str, ylabel: str) -> str:
    return (f"# gnuplot script for {fig_id}\n"
            f"set datafile separator ','\n"
            f"set key autotitle columnheader\n"
            f"set xlabel '{xlabel}'\n"
            f"set ylabel '{ylabel}'\n"
            f"set term pngcairo size 800,600\n"
            f"set output '{fig_id}.png'\n")


def emit_plots(source, figure_id: str, out_dir) -> dict[str, Path]:
    """Write <figure_id>.csv and <figure_id>.gp under ``out_dir``.

    ``source`` is the artifact the figure is derived from: a run
    directory for fig2a/fig3b, a repeats curve CSV for fig2d, a sweep
    directory for fig3a, or a sweep results.csv for fig4*/fig5f.
    """
    if figure_id not in FIGURES:
        raise LookupError(f"unknown figure id {figure_id!r}; known: {', '.join(sorted(FIGURES))}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    source = Path(source)
    csv_path = out_dir / f"{figure_id}.csv"
    gp_path = out_dir / f"{figure_id}.gp"

    def need(path: Path, hint: str):
        if not path.exists():
            raise FileNotFoundError(
                f"{figure_id} needs {path}; {FIGURES[figure_id]} - produce it with: {hint}")
        return path

    if figure_id == "fig2a":
        metrics = need(source / "metrics.csv" if source.is_dir() else source,
                       "memdbn train --out <dir>")
        with open(metrics, newline="") as fh:
            rows = list(csv.DictReader(fh))
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["phase", "layer", "epoch", "recon_error"])
            for r in rows:
                writer.writerow([r["phase"], r["layer"], r["epoch"], r["recon_error"]])
        layers = sorted({(r["phase"], r["layer"]) for r in rows})
        # one filtered series per (phase, layer)
        series = [
            f"'{csv_path.name}' using 3:(strcol(1) eq '{p}' && strcol(2) eq '{l}' ? $4 : NaN) "
            f"with linespoints title '{p} {l}'" for p, l in layers]
        gp_path.write_text(_gp_header(figure_id, "epoch", "mean reconstruction error")
                           + "plot " + ", \\\n     ".join(series) + "\n")
    elif figure_id == "fig2d":
        curve = need(source, "memdbn eval --checkpoint <ckpt> --mode sample --repeats-curve 1,5,25,50")
        with open(curve, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or "repeats" not in rows[0] or "accuracy" not in rows[0]:
            raise FileNotFoundError(f"{curve} must be a CSV with header repeats,accuracy")
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["repeats", "accuracy"])
            for r in rows:
                writer.writerow([r["repeats"], r["accuracy"]])
        gp_path.write_text(_gp_header(figure_id, "sampling repeats", "test accuracy")
                           + "set logscale x 2\n"
                           + f"plot '{csv_path.name}' using 1:2 skip 0 with linespoints title 'sampling'\n")
    elif figure_id == "fig3a":
        if not source.is_dir():
            raise FileNotFoundError(
                f"{figure_id} needs a cd_th sweep directory; run: memdbn sweep --param cd_th ...")
        run_dirs = sorted(p for p in source.iterdir() if p.is_dir() and (p / "metrics.csv").exists())
        if not run_dirs:
            raise FileNotFoundError(
                f"no per-run metrics.csv under {source}; run: memdbn sweep --param cd_th --out {source}")
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["run", "row", "acc_det"])
            for rd in run_dirs:
                with open(rd / "metrics.csv", newline="") as mfh:
                    for i, r in enumerate(csv.DictReader(mfh)):
                        if r["test_acc_det"]:
                            writer.writerow([rd.name, i, r["test_acc_det"]])
        runs = [rd.name for rd in run_dirs]
        series = [f"'{csv_path.name}' using 2:(strcol(1) eq '{name}' ? $3 : NaN) "
                  f"with linespoints title '{name}'" for name in runs]
        gp_path.write_text(_gp_header(figure_id, "epoch row", "test accuracy")
                           + "plot " + ", \\\n     ".join(series) + "\n")
    elif figure_id == "fig3b":
        wc_dir = source / "write_counts" if source.is_dir() else source
        files = sorted(Path(wc_dir).glob("write_counts_*.csv")) if Path(wc_dir).is_dir() else []
        if not files:
            raise FileNotFoundError(
                f"{figure_id} needs write_counts_*.csv under {wc_dir}; run: memdbn train --out <dir>")
        counts = np.concatenate([np.loadtxt(f, delimiter=",").ravel() for f in files])
        edges = np.unique(np.concatenate([[0, 1], np.logspace(0, max(1, np.log10(max(counts.max(), 2))), 24)]))
        hist, edges = np.histogram(counts, bins=edges)
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_left", "bin_right", "devices"])
            for left, right, n in zip(edges[:-1], edges[1:], hist):
                writer.writerow([_fmt(float(left)), _fmt(float(right)), int(n)])
        gp_path.write_text(_gp_header(figure_id, "write operations per device", "devices")
                           + "set logscale x\nset logscale y\n"
                           + f"plot '{csv_path.name}' using 1:3 skip 1 with boxes title 'write counts'\n")
    else:  # fig4b..fig4h, fig5f
        results = need(source / "results.csv" if source.is_dir() else source,
                       f"memdbn sweep --param {_FIG4_PARAM[figure_id]} ...")
        rows = read_results_csv(results)
        param = _FIG4_PARAM[figure_id]
        rows = [r for r in rows if r["param"] == param and not r.get("error")]
        if not rows:
            raise FileNotFoundError(
                f"{results} holds no successful '{param}' rows; run: memdbn sweep --param {param} ...")
        by_value: dict = {}
        for r in rows:
            by_value.setdefault(r["value"], []).append(float(r["best_acc_det"]))
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([param, "mean_best_acc_det", "std_best_acc_det", "trials"])
            for value, accs in by_value.items():
                writer.writerow([value, _fmt(float(np.mean(accs))),
                                 _fmt(float(np.std(accs))), len(accs)])
        style = "with yerrorlines" if figure_id != "fig5f" else "with boxerrorbars"
        gp_path.write_text(_gp_header(figure_id, param, "best test accuracy")
                           + f"plot '{csv_path.name}' using 1:2:3 skip 1 {style} title '{param}'\n")
    return {"csv": csv_path, "gp": gp_path}
