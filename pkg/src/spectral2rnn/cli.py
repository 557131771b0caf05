"""Command-line interface: ``spectral2rnn {gen,learn,bench,eval}``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import harness
from .data import BiasAugment, gen_addition_dataset, gen_datasets, gen_random_2rnn, gen_test_set
from .exceptions import MemoryCapExceeded, NumericalFailure, RecoveryDivergence
from .finetune import FinetuneConfig
from .io import (SchemaError, load_dataset, load_model, load_series_csv, save_dataset, save_model)
from .recovery import RecoveryConfig
from .spectral import SpectralConfig

log = logging.getLogger("spectral2rnn")

TASKS = ("random2rnn", "addition", "forecast")
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


def _sub_config(cls, obj, name):
    if obj is None:
        return None
    if not isinstance(obj, dict):
        raise UsageError(f"'{name}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(obj) - known
    if unknown:
        raise UsageError(f"unknown keys in '{name}': {sorted(unknown)}")
    try:
        return cls(**obj)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid '{name}': {exc}") from None


@dataclass
class ExperimentConfig:
    task: str = "random2rnn"
    seed: int = 0
    L: int = 2
    sizes: list = field(default_factory=lambda: [1000, 1000, 1000])
    noise_std: float = 0.0
    n_states: int = 5
    input_dim: int = 3
    output_dim: int = 2
    param_std: float = harness.REFERENCE_PARAM_STD
    test_size: int = 1000
    test_length: int = 6
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    finetune: FinetuneConfig | None = None
    zero_fallback: bool = True
    data_dir: str | None = None
    series: str | None = None
    split: float | str = 0.7
    window: int = 6
    horizons: list = field(default_factory=lambda: [1, 3, 6])
    bench: dict = field(default_factory=dict)
    out: str = "."

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise UsageError("config must be a JSON object")
        obj = dict(obj)
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)}")
        obj["recovery"] = _sub_config(RecoveryConfig, obj.get("recovery", {}), "recovery")
        obj["spectral"] = _sub_config(SpectralConfig, obj.get("spectral", {}), "spectral")
        obj["finetune"] = _sub_config(FinetuneConfig, obj.get("finetune"), "finetune")
        cfg = cls(**obj)
        cfg.validate()
        return cfg

    def validate(self):
        if self.task not in TASKS:
            raise UsageError(f"unknown task {self.task!r}; choose from {TASKS}")
        if isinstance(self.sizes, int):
            self.sizes = [self.sizes] * 3
        if len(self.sizes) != 3 or any(int(s) < 0 for s in self.sizes):
            raise UsageError("sizes must be three non-negative integers (lengths L, 2L, 2L+1)")
        if self.L < 1:
            raise UsageError("L must be >= 1")
        if self.noise_std < 0:
            raise UsageError("noise_std must be >= 0")
        self.spectral.L = self.L

    @property
    def data_path(self) -> Path:
        return Path(self.data_dir or self.out)

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(args) -> ExperimentConfig:
    obj = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {path} not found")
        try:
            obj = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    cfg = ExperimentConfig.from_dict(obj)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "method", None):
        cfg.recovery = _sub_config(RecoveryConfig, {**asdict(cfg.recovery), "method": args.method}, "recovery")
    if getattr(args, "rank", None) is not None:
        cfg.recovery.rank = args.rank
        cfg.spectral.rank = args.rank
    if args.out:
        cfg.out = args.out
    cfg.recovery.seed = cfg.seed
    if cfg.finetune is not None:
        cfg.finetune.seed = cfg.seed
    return cfg


def _train_name(length: int) -> str:
    return f"train_len{length}.jsonl"


def _write_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- commands ---------------------------------------------------------------

def _synthetic(cfg: ExperimentConfig):
    if cfg.task == "addition":
        train, model = gen_addition_dataset(cfg.sizes, cfg.L, cfg.noise_std, cfg.seed)
        test = gen_test_set(model, cfg.test_size, cfg.test_length, cfg.seed, input_fn=BiasAugment(2))
    else:
        model = gen_random_2rnn(cfg.n_states, cfg.input_dim, cfg.output_dim, cfg.param_std, cfg.seed)
        train = gen_datasets(model, cfg.L, cfg.sizes, cfg.noise_std, cfg.seed)
        test = gen_test_set(model, cfg.test_size, cfg.test_length, cfg.seed)
    return train, test, model


def cmd_gen(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.task == "forecast":
        series = harness.surrogate_wind_series(seed=cfg.seed)
        series.rename_axis("timestamp").to_csv(out / "series.csv", float_format="%.10g")
        log.info("wrote %s", out / "series.csv")
        return EXIT_OK
    train, test, model = _synthetic(cfg)
    for ds in train:
        ds.metadata["task"] = cfg.task
        save_dataset(ds, out / _train_name(ds.length))
    test.metadata["task"] = cfg.task
    save_dataset(test, out / "test.jsonl")
    save_model(model, out / "true_model.json", {"task": cfg.task, "seed": cfg.seed})
    log.info("wrote %d training sets and a test set to %s", len(train), out)
    return EXIT_OK


def _load_training(cfg: ExperimentConfig):
    paths = [cfg.data_path / _train_name(l) for l in (cfg.L, 2 * cfg.L, 2 * cfg.L + 1)]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise UsageError(f"missing training datasets: {missing} (run 'gen' first)")
    return [load_dataset(p) for p in paths]


def _learn_forecast(cfg: ExperimentConfig, out: Path) -> int:
    if not cfg.series or not Path(cfg.series).exists():
        raise UsageError(f"forecast task needs an existing 'series' CSV (got {cfg.series!r})")
    series = load_series_csv(cfg.series)
    hourly = harness.hourly_average(series)
    train, test = harness.split_series(hourly, cfg.split)
    ft = cfg.finetune
    fc = harness.fit_forecaster(train.to_numpy(), cfg.L, cfg.recovery.rank or 3, cfg.recovery.method, ft, cfg.seed)
    save_model(fc.model, out / "model.json", {"task": "forecast", "mean": fc.mean, "scale": fc.scale,
                                              "L": cfg.L, "seed": cfg.seed, "encoding": "(value, 1)"})
    summary = {}
    for h in cfg.horizons:
        pred, targ = harness.forecast_pipeline(test.to_numpy(), cfg.window, h, fc)
        summary[str(h)] = harness.metrics(pred, targ)
    _write_json({"task": "forecast", "horizons": summary}, out / "metrics.json")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_learn(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.task == "forecast":
        return _learn_forecast(cfg, out)
    train = _load_training(cfg)
    model, info = harness.learn_2rnn(train, cfg.recovery, cfg.spectral, cfg.finetune, cfg.zero_fallback)
    for a in (model.h0, model.A, model.omega):
        if not np.all(np.isfinite(a)):
            raise NumericalFailure("learned parameters are not finite")
    save_model(model, out / "model.json", {"task": cfg.task, "method": cfg.recovery.method, "seed": cfg.seed,
                                           "rank": info.rank, "fallback": info.fallback,
                                           "finetune": asdict(cfg.finetune) if cfg.finetune else None})
    row = {"task": cfg.task, "method": cfg.recovery.method, "N": sum(len(ds) for ds in train), "seed": cfg.seed,
           "rank": info.rank, "fallback": info.fallback,
           "train_mse": harness.pooled_train_mse(model, train),
           "seconds_recovery": info.seconds.get("recovery", 0.0),
           "seconds_spectral": info.seconds.get("spectral", 0.0),
           "seconds_finetune": info.seconds.get("finetune", 0.0)}
    test_path = cfg.data_path / "test.jsonl"
    if test_path.exists():
        test = load_dataset(test_path)
        row["test_mse"] = harness.metrics(model.predict(test.inputs), test.targets)["MSE"]
    harness.write_csv([row], out / "result.csv", list(row))
    print(json.dumps(row, sort_keys=True))
    return EXIT_OK


def cmd_bench(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    b = cfg.bench
    rows = harness.bench_runtime(b.get("methods", ["tiht", "als"]), b.get("lengths", [2, 3, 4]),
                                 b.get("budget", 300.0), n=b.get("n", 3), d=b.get("d", 5), p=b.get("p", 1),
                                 N=b.get("N", 1000), seed=cfg.seed, target_mse=b.get("target_mse", 1e-6),
                                 max_entries=b.get("max_entries", harness.DENSE_ENTRY_CAP),
                                 out=str(out / "bench.csv"))
    for r in rows:
        print(f"{r['method']:>16} L={r['L']:<3} {r['seconds']:10.4f}s  {r['status']}")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        model = load_model(args.model)
    except FileNotFoundError:
        raise UsageError(f"model file {args.model} not found") from None
    if args.series:
        series = load_series_csv(args.series)
        meta = json.loads(Path(args.model).read_text()).get("metadata", {})
        fc = harness.Forecaster(model, meta.get("mean", 0.0), meta.get("scale", 1.0))
        result = {}
        for h in args.horizons:
            pred, targ = harness.forecast_pipeline(series, args.window, h, fc)
            m = harness.metrics(pred, targ)
            result[str(h)] = {k: m[k] for k in ("RMSE", "MAPE", "MAE")}
        result = {"mode": "forecast", "horizons": result}
    else:
        if not args.data:
            raise UsageError("eval needs --data or --series")
        try:
            ds = load_dataset(args.data)
        except FileNotFoundError:
            raise UsageError(f"dataset {args.data} not found") from None
        if len(ds) == 0:
            raise UsageError(f"dataset {args.data} is empty")
        if ds.input_dim != model.input_dim or ds.output_dim != model.output_dim:
            raise UsageError(f"dataset dimensions ({ds.input_dim}, {ds.output_dim}) do not match the model "
                             f"({model.input_dim}, {model.output_dim})")
        result = {"mode": "sequences", "n_examples": len(ds),
                  **harness.metrics(model.predict(ds.inputs), ds.targets)}
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectral2rnn", description="Spectral learning of linear 2-RNNs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, method=False):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", help="output directory")
        if method:
            p.add_argument("--method", help="recovery method (least_squares, nuclear_norm, iht, tiht, als, sgd)")
            p.add_argument("--rank", type=int, help="target rank / number of states")

    common(sub.add_parser("gen", help="write synthetic datasets"))
    common(sub.add_parser("learn", help="learn a model from datasets"), method=True)
    common(sub.add_parser("bench", help="runtime benchmark"), method=True)
    ev = sub.add_parser("eval", help="evaluate a model file")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", help="JSON-lines dataset")
    ev.add_argument("--series", help="time-series CSV (forecasting mode)")
    ev.add_argument("--window", type=int, default=6)
    ev.add_argument("--horizons", type=int, nargs="+", default=[1, 3, 6])
    ev.add_argument("--out", help="metrics JSON path")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "eval":
            return cmd_eval(args)
        cfg = load_config(args)
        if args.command == "bench" and args.method:
            cfg.bench = {**cfg.bench, "methods": [args.method]}
        return {"gen": cmd_gen, "learn": cmd_learn, "bench": cmd_bench}[args.command](cfg)
    except (UsageError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RecoveryDivergence, NumericalFailure, MemoryCapExceeded, np.linalg.LinAlgError,
            FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
