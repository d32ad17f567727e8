"""Command-line harness: ``train``, ``eval``, ``ablate``, ``decompose``, ``synth``.

Every run is described by a flat ``key = value`` :class:`RunConfig`. A
config file given with ``--config`` is applied first, then any
``--<key> value`` flags.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .data import (ETT_HOUR_SPANS, ETT_MINUTE_SPANS, DataError, SeriesFrame,
                   WindowSampler, chronological_split, load_csv, synth_trend_seasonal,
                   write_csv)
from .decomposition import decompose, fixed_decompose
from .metrics import METRIC_NAMES, MetricsReport, evaluate_forecasts
from .model import (ConfigError, LMSAutoTSF, ModelConfig, count_params, estimate_flops,
                    load_checkpoint, format_value, parse_fields, parse_kv, save_checkpoint)
from .training import TrainingAborted, predict_split, train

log = logging.getLogger("lmstsf")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

CHECKPOINT_NAME = "checkpoint.lmsa"
RESOLVED_NAME = "resolved_config.txt"
LOG_NAME = "train_log.csv"

ABLATION_VARIANTS = (
    ("fixed", {"decomposition": "fixed", "autocorrelation": False}),
    ("learnable", {"decomposition": "learnable", "autocorrelation": False}),
    ("learnable+autocorrelation", {"decomposition": "learnable", "autocorrelation": True}),
)


@dataclass(frozen=True)
class RunConfig:
    # data
    data: str = ""
    has_date: bool = True
    split: str = "ratio"
    train_ratio: float = 0.7
    val_ratio: float = 0.1
    test_ratio: float = 0.2
    stride: int = 1
    synth_length: int = 2000
    synth_channels: int = 2
    synth_slopes: str = "0.002,-0.001"
    synth_periods: str = "24,12"
    synth_amplitudes: str = "1.0,0.5"
    synth_noise: float = 0.0
    synth_seed: int = 0
    # model
    lookback: int = 96
    horizon: int = 24
    scales: int = 4
    factor: int = 2
    decomposition: str = "learnable"
    autocorrelation: bool = True
    fixed_kernel: int = 25
    activation: str = "none"
    norm: str = "window"
    init_cutoff: float = 0.1
    init_steepness: float = 10.0
    seed: int = 2024
    # training
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-4
    weight_decay: float = 0.0
    patience: int = 3
    workers: int = 0
    # output
    output_dir: str = "runs/latest"
    unscaled_metrics: bool = False
    mase_period: int = 1
    predictions: bool = False
    ablation_seeds: str = ""

    def __post_init__(self):
        if self.split not in ("ratio", "ett_hour", "ett_minute"):
            raise ConfigError(f"split must be ratio, ett_hour or ett_minute, got {self.split!r}")
        for name in ("epochs", "patience", "workers"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")

    def to_text(self) -> str:
        items = dataclasses.asdict(self)
        return "".join(f"{k} = {format_value(items[k])}\n" for k in sorted(items))

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls(**parse_fields(cls, parse_kv(text)))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def model_config(self, channels: int) -> ModelConfig:
        return ModelConfig(
            lookback=self.lookback, horizon=self.horizon, channels=channels,
            scales=self.scales, factor=self.factor, decomposition=self.decomposition,
            autocorrelation=self.autocorrelation, fixed_kernel=self.fixed_kernel,
            seed=self.seed, norm=self.norm, activation=self.activation,
            init_cutoff=self.init_cutoff, init_steepness=self.init_steepness,
        )


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# data plumbing
# ---------------------------------------------------------------------------

def load_frame(cfg: RunConfig) -> SeriesFrame:
    if cfg.data:
        return load_csv(cfg.data, cfg.has_date)
    return synth_frame(cfg)


def synth_frame(cfg: RunConfig) -> SeriesFrame:
    return synth_trend_seasonal(
        cfg.synth_length, cfg.synth_channels, _floats(cfg.synth_slopes),
        _floats(cfg.synth_periods), _floats(cfg.synth_amplitudes),
        cfg.synth_noise, cfg.synth_seed,
    )


def make_sampler(cfg: RunConfig, frame: SeriesFrame, horizon: int | None = None) -> WindowSampler:
    spans = {"ett_hour": ETT_HOUR_SPANS, "ett_minute": ETT_MINUTE_SPANS}.get(cfg.split)
    return chronological_split(
        frame, cfg.lookback, horizon or cfg.horizon,
        ratios=(cfg.train_ratio, cfg.val_ratio, cfg.test_ratio), spans=spans,
        stride=cfg.stride,
    )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def run_train(cfg: RunConfig, out_dir: Path | None = None) -> dict:
    """Train one model; returns a summary with the paths it wrote."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    frame = load_frame(cfg)
    sampler = make_sampler(cfg, frame)
    model = LMSAutoTSF(cfg.model_config(frame.channels))
    (out / RESOLVED_NAME).write_text(cfg.to_text())

    log_path = out / LOG_NAME
    with log_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_mse", "seconds"])

        def on_epoch(rec):
            writer.writerow([rec.epoch, repr(rec.train_loss), repr(rec.val_mse),
                             f"{rec.seconds:.3f}"])
            fh.flush()

        result = train(model, sampler, cfg.epochs, cfg.batch_size, cfg.learning_rate,
                       cfg.weight_decay, cfg.patience, cfg.seed, on_epoch, cfg.workers)
    save_checkpoint(model, out / CHECKPOINT_NAME)
    report = evaluate_model(model, sampler, cfg, "test")
    report.write_json(out / "metrics.json")
    report.write_csv(out / "metrics.csv")
    return {
        "output_dir": str(out),
        "best_epoch": result.best_epoch,
        "best_val_mse": result.best_val_mse,
        "test": report.rows[model.config.horizon],
        "params": count_params(model.config),
        "flops": estimate_flops(model.config),
    }


def evaluate_model(model: LMSAutoTSF, sampler: WindowSampler, cfg: RunConfig,
                   split: str = "test", predictions_path: Path | None = None) -> MetricsReport:
    return evaluate_models([model], [sampler], cfg, split, predictions_path)


def evaluate_models(models, samplers, cfg: RunConfig, split: str = "test",
                    predictions_path: Path | None = None) -> MetricsReport:
    rows, windows, unscaled, timing = {}, {}, {}, {}
    dump = []
    for model, sampler in zip(models, samplers):
        h = model.config.horizon
        t0 = time.perf_counter()
        pred, truth, hist = predict_split(model, sampler, split)
        timing[str(h)] = time.perf_counter() - t0
        start, end = sampler.train_rows
        insample = sampler.values[start:end]
        rows[h] = evaluate_forecasts(pred, truth, hist, insample, cfg.mase_period)
        windows[h] = len(pred)
        if cfg.unscaled_metrics and sampler.scaler is not None:
            inv = sampler.scaler.inverse_transform
            unscaled[str(h)] = evaluate_forecasts(inv(pred), inv(truth), inv(hist),
                                                  inv(insample), cfg.mase_period)
        if predictions_path is not None:
            dump.append((h, pred, truth))
    extra = {"split": split, "seconds": timing}
    if unscaled:
        extra["unscaled"] = unscaled
    if predictions_path is not None:
        write_predictions(predictions_path, dump)
    return MetricsReport(rows, windows, extra)


def write_predictions(path: Path, dump) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        channels = dump[0][1].shape[2]
        w.writerow(["horizon", "window", "step"]
                   + [f"pred_{c}" for c in range(channels)]
                   + [f"true_{c}" for c in range(channels)])
        for h, pred, truth in dump:
            for i in range(pred.shape[0]):
                for s in range(pred.shape[1]):
                    w.writerow([h, i, s] + [repr(float(v)) for v in pred[i, s]]
                               + [repr(float(v)) for v in truth[i, s]])


def run_eval(cfg: RunConfig, checkpoints: list[Path], split: str = "test",
             out_dir: Path | None = None) -> MetricsReport:
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    frame = load_frame(cfg)
    models, samplers = [], []
    for path in checkpoints:
        model = load_checkpoint(path)
        mc = model.config
        if mc.channels != frame.channels:
            raise DataError(f"checkpoint {path} expects {mc.channels} channels, "
                            f"data has {frame.channels}")
        if mc.lookback != cfg.lookback:
            raise ConfigError(f"checkpoint {path} has lookback {mc.lookback}, "
                              f"config says {cfg.lookback}")
        models.append(model)
        samplers.append(make_sampler(cfg, frame, mc.horizon))
    pred_path = out / "predictions.csv" if cfg.predictions else None
    report = evaluate_models(models, samplers, cfg, split, pred_path)
    report.write_json(out / "metrics.json")
    report.write_csv(out / "metrics.csv")
    return report


def run_ablate(cfg: RunConfig, out_dir: Path | None = None) -> list[dict]:
    """Train the three ablation variants on identical data and seeds."""
    out = Path(out_dir or cfg.output_dir)
    seeds = [int(s) for s in _floats(cfg.ablation_seeds)] or [cfg.seed]
    rows = []
    for name, change in ABLATION_VARIANTS:
        scores = {m: [] for m in METRIC_NAMES}
        for seed in seeds:
            run_cfg = cfg.replace(seed=seed, **change)
            summary = run_train(run_cfg, out / name.replace("+", "_") / f"seed{seed}")
            for m in METRIC_NAMES:
                scores[m].append(summary["test"][m])
        row = {"variant": name, "seeds": len(seeds)}
        for m, vals in scores.items():
            row[m] = None if any(v is None for v in vals) else float(np.mean(vals))
        rows.append(row)
    with (out / "ablation.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "seeds", *METRIC_NAMES])
        for r in rows:
            w.writerow([r["variant"], r["seeds"]]
                       + ["" if r[m] is None else repr(r[m]) for m in METRIC_NAMES])
    (out / "ablation.json").write_text(json.dumps(rows, indent=2) + "\n")
    return rows


def run_decompose(cfg: RunConfig, checkpoint: Path | None, scale: int = 1,
                  out_dir: Path | None = None) -> dict:
    """Split the (raw) data series at ``scale`` (1-based) into trend and seasonal CSVs."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    frame = load_frame(cfg)
    model = load_checkpoint(checkpoint) if checkpoint else LMSAutoTSF(cfg.model_config(frame.channels))
    mc = model.config
    if mc.channels != frame.channels:
        raise DataError(f"model expects {mc.channels} channels, data has {frame.channels}")
    if not 1 <= scale <= mc.scales:
        raise ConfigError(f"scale must be in 1..{mc.scales}, got {scale}")
    series = ad.Tensor(frame.values[None])
    for _ in range(scale - 1):
        series = ad.avg_pool(series, mc.factor)
    sp = model.scales[scale - 1]
    if sp.bank is not None:
        trend, seasonal = decompose(series, sp.bank)
    else:
        trend, seasonal = fixed_decompose(series, mc.fixed_kernel)
    names = frame.channel_names
    stamps = None
    if frame.timestamps is not None:
        stamps = frame.timestamps[:: mc.factor ** (scale - 1)][: series.shape[1]]
    write_csv(SeriesFrame(series.value[0], names, stamps), out / "input.csv")
    write_csv(SeriesFrame(trend.value[0], names, stamps), out / "trend.csv")
    write_csv(SeriesFrame(seasonal.value[0], names, stamps), out / "seasonal.csv")
    with (out / "filters.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["channel", "cutoff", "steepness"])
        for c, name in enumerate(names):
            if sp.bank is None:
                w.writerow([name, "", ""])
            else:
                w.writerow([name, repr(float(sp.bank.cutoff.value[c])),
                            repr(float(sp.bank.steepness.value[c]))])
    return {"output_dir": str(out), "length": series.shape[1]}


def run_synth(cfg: RunConfig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        write_csv(synth_frame(cfg), path)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from None
    return path


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat key = value config file")
    for f in dataclasses.fields(RunConfig):
        flags = [f"--{f.name}"]
        if "_" in f.name:
            flags.append(f"--{f.name.replace('_', '-')}")
        parser.add_argument(*flags, dest=f"cfg_{f.name}", default=None, metavar="VALUE")


def resolve_config(args: argparse.Namespace, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    values = {}
    if args.config is not None:
        try:
            values.update(parse_kv(Path(args.config).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f"cfg_{f.name}")
        if v is not None:
            values[f.name] = v
    return cfg.replace(**parse_fields(RunConfig, values))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmstsf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and evaluate it on the test split")
    _add_config_flags(p)

    p = sub.add_parser("eval", help="evaluate one or more checkpoints")
    p.add_argument("--checkpoint", type=Path, action="append", required=True)
    p.add_argument("--eval-split", choices=("train", "val", "test"), default="test")
    _add_config_flags(p)

    p = sub.add_parser("ablate", help="fixed / learnable / learnable+autocorrelation comparison")
    _add_config_flags(p)

    p = sub.add_parser("decompose", help="write trend and seasonal components")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--scale", type=int, default=1, help="1-based scale index")
    _add_config_flags(p)

    p = sub.add_parser("synth", help="write a synthetic benchmark-format CSV")
    p.add_argument("--out", type=Path, required=True)
    _add_config_flags(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        base = None
        if args.command == "eval" and args.config is None:
            resolved = args.checkpoint[0].parent / RESOLVED_NAME
            if resolved.exists():
                base = RunConfig.from_text(resolved.read_text())
        cfg = resolve_config(args, base)
        if args.command == "train":
            print(json.dumps(run_train(cfg), indent=2))
        elif args.command == "eval":
            report = run_eval(cfg, args.checkpoint, args.eval_split)
            print(json.dumps(report.average(), indent=2))
        elif args.command == "ablate":
            print(json.dumps(run_ablate(cfg), indent=2))
        elif args.command == "decompose":
            print(json.dumps(run_decompose(cfg, args.checkpoint, args.scale), indent=2))
        elif args.command == "synth":
            print(run_synth(cfg, args.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingAborted, ad.NonFiniteError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
