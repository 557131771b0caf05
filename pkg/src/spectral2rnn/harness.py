"""End-to-end learning pipeline, experiment grids, metrics, forecasting and benchmarks."""
from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from .data import (BiasAugment, SequenceDataset, gen_addition_dataset, gen_datasets, gen_random_2rnn,
                   gen_test_set, rng_stream)
from .exceptions import MemoryCapExceeded
from .finetune import FinetuneConfig, finetune
from .io import serialized_size
from .models import Linear2RNN, exact_hankel
from .recovery import RecoveryConfig, recover, recover_hankels
from .spectral import SpectralConfig, hankel_spectrum, spectral_learn
from .tt import DENSE_ENTRY_CAP, tt_to_dense

WORKERS_ENV = "SPECTRAL2RNN_WORKERS"

# Reference numbers from the published wind-speed study, per horizon (hours).
# Columns: RMSE, MAPE (%), MAE.
PUBLISHED_FORECAST_TABLES = {
    1: {"TIHT": (0.573, 21.35, 0.412), "TIHT+SGD": (0.519, 18.79, 0.376), "ALS": (0.586, 22.12, 0.423),
        "ALS+SGD": (0.522, 19.01, 0.388), "RA": (0.500, 18.58, 0.363), "ARIMA": (0.496, 18.74, 0.361),
        "RNN": (0.606, 24.48, 0.471), "Persistence": (0.508, 18.61, 0.367)},
    3: {"TIHT": (0.868, 33.98, 0.632), "TIHT+SGD": (0.854, 31.70, 0.624), "ALS": (0.875, 34.67, 0.648),
        "ALS+SGD": (0.864, 32.13, 0.628), "RA": (0.872, 32.52, 0.632), "ARIMA": (0.882, 33.165, 0.642),
        "RNN": (1.002, 37.24, 0.764), "Persistence": (0.893, 33.29, 0.649)},
    6: {"TIHT": (1.234, 49.08, 0.940), "TIHT+SGD": (1.145, 44.88, 0.865), "ALS": (1.283, 47.65, 0.932),
        "ALS+SGD": (1.128, 45.03, 0.869), "RA": (1.205, 46.809, 0.898), "ARIMA": (1.227, 48.02, 0.919),
        "RNN": (1.261, 47.03, 0.944), "Persistence": (1.234, 48.11, 0.923)},
}

# Hankel sizes in GB by length for n=3, d=5, p=1: (TT format, matrix format).
PUBLISHED_MEMORY_TABLE = {4: (2.68e-06, 1.40e-05), 6: (4.69e-06, 3.49e-04), 8: (6.70e-06, 8.73e-03),
                      10: (8.71e-06, 2.20e-01), 12: (1.07e-05, 5.40e-01), 14: (1.27e-05, 136.0)}

# N(0, 0.2) read as variance 0.2, matching the N(0, sigma^2) convention used for the noise.
REFERENCE_PARAM_STD = math.sqrt(0.2)

N_GRID = (20, 50, 100, 250, 500, 1000, 2500, 5000)


# -- metrics ----------------------------------------------------------------

def metrics(predictions, targets) -> dict:
    """MSE, RMSE, MAE and MAPE (percent); zero targets are left out of MAPE and counted."""
    pred = np.asarray(predictions, dtype=float).reshape(-1)
    targ = np.asarray(targets, dtype=float).reshape(-1)
    if pred.shape != targ.shape:
        raise ValueError(f"{pred.size} predictions for {targ.size} targets")
    err = pred - targ
    mse = float(np.mean(err**2)) if err.size else float("nan")
    nz = targ != 0
    mape = float(100.0 * np.mean(np.abs(err[nz] / targ[nz]))) if nz.any() else float("nan")
    return {"MSE": mse, "RMSE": math.sqrt(mse), "MAE": float(np.mean(np.abs(err))) if err.size else float("nan"),
            "MAPE": mape, "MAPE_excluded": int(np.count_nonzero(~nz))}


def _mse(model, ds: SequenceDataset) -> float:
    if not len(ds):
        return 0.0
    return float(np.mean(np.sum((model.predict(ds.inputs) - ds.targets) ** 2, axis=1)))


def pooled_train_mse(model, datasets) -> float:
    total = sum(_mse(model, ds) * len(ds) for ds in datasets)
    count = sum(len(ds) for ds in datasets)
    return total / count if count else 0.0


def zero_fallback_guard(model: Linear2RNN, train_data, return_flag: bool = False):
    """Swap in the zero model when ``model`` fits the training data worse than predicting zero."""
    datasets = [train_data] if isinstance(train_data, SequenceDataset) else list(train_data)
    with np.errstate(all="ignore"):
        model_mse = pooled_train_mse(model, datasets)
    zero_mse = sum(float(np.sum(ds.targets**2)) for ds in datasets) / max(sum(len(ds) for ds in datasets), 1)
    fall_back = not (model_mse <= zero_mse)  # NaN counts as worse
    out = Linear2RNN.zero(1, model.input_dim, model.output_dim) if fall_back else model
    return (out, fall_back) if return_flag else out


# -- learning pipeline ------------------------------------------------------

@dataclass
class PipelineInfo:
    rank: int = 0
    singular_values: list = field(default_factory=list)
    fallback: bool = False
    seconds: dict = field(default_factory=dict)
    recovery_flags: list = field(default_factory=list)
    finetune_flags: list = field(default_factory=list)


def learn_2rnn(datasets, recovery: RecoveryConfig, spectral: SpectralConfig | None = None,
               finetune_config: FinetuneConfig | None = None, zero_fallback: bool = True,
               max_entries: int = DENSE_ENTRY_CAP):
    """Hankel recovery, spectral learning, optional refinement and the zero-fallback guard.

    ``datasets`` are the training sets of lengths L, 2L, 2L+1.
    Returns ``(model, PipelineInfo)``.
    """
    datasets = list(datasets)
    if len(datasets) != 3:
        raise ValueError("need the three training sets of lengths L, 2L and 2L+1")
    L = datasets[0].length
    spectral = spectral or SpectralConfig(rank=recovery.rank, L=L)
    info = PipelineInfo()

    t0 = time.perf_counter()
    hankels, rec_infos = recover_hankels(datasets, recovery, return_info=True, max_entries=max_entries)
    info.seconds["recovery"] = time.perf_counter() - t0
    for ri in rec_infos:
        info.recovery_flags += ri.flags

    t0 = time.perf_counter()
    spectrum = hankel_spectrum(hankels[1])
    model = spectral_learn(*hankels, spectral)
    info.seconds["spectral"] = time.perf_counter() - t0
    info.singular_values = [float(s) for s in spectrum]
    info.rank = 0 if model.is_zero() else model.n_states

    info.seconds["finetune"] = 0.0
    if finetune_config is not None and not model.is_zero():
        t0 = time.perf_counter()
        model, ft = finetune(model, datasets, finetune_config, return_info=True)
        info.finetune_flags = ft.flags
        info.seconds["finetune"] = time.perf_counter() - t0

    if zero_fallback:
        model, info.fallback = zero_fallback_guard(model, datasets, return_flag=True)
    return model, info


# -- experiment grid --------------------------------------------------------

@dataclass
class ExperimentResult:
    task: str
    method: str
    N: int
    seed: int
    noise_std: float
    test_mse: float
    train_mse: float
    seconds_recovery: float
    seconds_spectral: float
    seconds_finetune: float
    rank: int
    fallback: bool
    finetuned: bool = False
    error: str = ""

    def key(self):
        return (self.task, self.method, self.finetuned, self.noise_std, self.N, self.seed)


@dataclass(frozen=True)
class Cell:
    task: str = "random2rnn"
    method: str = "tiht"
    N: int = 100
    seed: int = 0
    noise_std: float = 0.0
    finetune: bool = False
    L: int = 2
    n_states: int = 5
    max_iters: int | None = None


def make_task(task: str, N: int, seed: int, noise_std: float, L: int = 2):
    """Training sets, test set and true model for a synthetic task."""
    if task == "random2rnn":
        model = gen_random_2rnn(5, 3, 2, REFERENCE_PARAM_STD, seed)
        train = gen_datasets(model, L, N, noise_std, seed)
        test = gen_test_set(model, 1000, 6, seed)
    elif task == "addition":
        train, model = gen_addition_dataset(N, L, noise_std, seed)
        test = gen_test_set(model, 1000, 6, seed, input_fn=BiasAugment(2))
    else:
        raise ValueError(f"unknown synthetic task {task!r}")
    return train, test, model


def run_cell(cell: Cell) -> ExperimentResult:
    train, test, truth = make_task(cell.task, cell.N, cell.seed, cell.noise_std, cell.L)
    n_states = truth.n_states if cell.task == "addition" else cell.n_states
    eps = 0.1 * math.sqrt(sum(float(np.sum(ds.targets**2)) for ds in train)) if cell.noise_std > 0 else 0.0
    rec = RecoveryConfig(cell.method, rank=n_states, seed=cell.seed, max_iters=cell.max_iters,
                         epsilon=eps / math.sqrt(3) if cell.method == "nuclear_norm" else 0.0)
    ft = FinetuneConfig(seed=cell.seed) if cell.finetune else None
    try:
        model, info = learn_2rnn(train, rec, SpectralConfig(rank=n_states, L=cell.L), ft)
        error = ""
    except (ArithmeticError, MemoryError, np.linalg.LinAlgError) as exc:
        model, info, error = Linear2RNN.zero(1, truth.input_dim, truth.output_dim), PipelineInfo(fallback=True), repr(exc)
    s = info.seconds
    return ExperimentResult(cell.task, cell.method, cell.N, cell.seed, cell.noise_std, _mse(model, test),
                            pooled_train_mse(model, train), s.get("recovery", 0.0), s.get("spectral", 0.0),
                            s.get("finetune", 0.0), info.rank, info.fallback, cell.finetune, error)


def worker_count(default: int = 1) -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, default)))
    except ValueError:
        return default


def run_grid(cells, workers: int | None = None) -> list[ExperimentResult]:
    """Run independent cells, in a process pool when ``workers > 1``; results sorted by key."""
    cells = list(cells)
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_cell, cells))
    else:
        results = [run_cell(c) for c in cells]
    return sorted(results, key=ExperimentResult.key)


def results_to_frame(results) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in results])


def median_curve(results, method: str, value: str = "test_mse") -> dict:
    """Median of ``value`` per N for one method."""
    df = results_to_frame([r for r in results if r.method == method])
    return df.groupby("N")[value].median().to_dict()


# -- forecasting ------------------------------------------------------------

def surrogate_wind_series(n_days: int = 60, seed: int = 0, start: str = "2013-04-23") -> pd.Series:
    """Five-minute wind-speed-like series: AR(1) fluctuations around a daily cycle, kept positive."""
    rng = rng_stream(seed, "data")
    n = n_days * 24 * 12
    t = np.arange(n)
    noise = np.empty(n)
    noise[0] = 0.0
    shocks = rng.standard_normal(n) * 0.35
    for i in range(1, n):
        noise[i] = 0.995 * noise[i - 1] + shocks[i]
    daily = 1.2 * np.sin(2 * np.pi * t / (24 * 12))
    values = np.maximum(5.0 + daily + noise + 0.3 * rng.standard_normal(n), 0.2)
    index = pd.date_range(start, periods=n, freq="5min")
    return pd.Series(values, index=index, name="wind_speed")


def hourly_average(series: pd.Series) -> pd.Series:
    if not isinstance(series.index, pd.DatetimeIndex):
        raise ValueError("hourly averaging needs a datetime index")
    return series.resample("h").mean().dropna()


def encode_windows(windows) -> np.ndarray:
    """Scalar windows ``(M, w)`` as sequences of ``(value, 1)`` vectors ``(M, w, 2)``."""
    windows = np.asarray(windows, dtype=float)
    return np.stack([windows, np.ones_like(windows)], axis=-1)


def window_dataset(values, length: int) -> SequenceDataset:
    """Every run of ``length`` consecutive values with the next value as target."""
    values = np.asarray(values, dtype=float)
    M = len(values) - length
    if M < 1:
        raise ValueError(f"series of {len(values)} points too short for windows of {length}")
    idx = np.arange(length)[None, :] + np.arange(M)[:, None]
    return SequenceDataset(encode_windows(values[idx]), values[length:, None], {"window": length})


@dataclass
class Forecaster:
    """A linear 2-RNN on standardized values, with the scaling used in training."""

    model: Linear2RNN
    mean: float
    scale: float

    def predict_next(self, windows) -> np.ndarray:
        z = (np.asarray(windows, dtype=float) - self.mean) / self.scale
        return self.model.predict(encode_windows(z))[:, 0] * self.scale + self.mean


FORECAST_FINETUNE = FinetuneConfig(learning_rate=1e-3, epochs=20)


def fit_forecaster(train_values, L: int = 3, n_states: int = 3, method: str = "tiht",
                   finetune_config: FinetuneConfig | None = None, seed: int = 0,
                   max_iters: int | None = None) -> Forecaster:
    values = np.asarray(train_values, dtype=float)
    mean, scale = float(values.mean()), float(values.std()) or 1.0
    z = (values - mean) / scale
    train = [window_dataset(z, length) for length in (L, 2 * L, 2 * L + 1)]
    rank = min(n_states, 2**L)  # (value, 1) inputs: the Hankel matricization has rank <= 2**L
    rec = RecoveryConfig(method, rank=rank, seed=seed, max_iters=max_iters)
    model, _ = learn_2rnn(train, rec, SpectralConfig(rank=rank, L=L), finetune_config)
    return Forecaster(model, mean, scale)


def forecast_pipeline(series, window: int, horizon: int, model) -> tuple[np.ndarray, np.ndarray]:
    """``horizon``-step-ahead forecasts from every ``window`` of observations.

    A datetime-indexed series is first averaged per hour.  Steps beyond the
    first feed the model's own forecasts back in.  Returns ``(predictions,
    targets)`` aligned so ``targets[i]`` is the value ``horizon`` steps after
    the i-th window.
    """
    if window < 1 or horizon < 1:
        raise ValueError("window and horizon must be >= 1")
    if isinstance(series, pd.Series) and isinstance(series.index, pd.DatetimeIndex):
        series = hourly_average(series)
    values = np.asarray(series, dtype=float).reshape(-1)
    M = len(values) - window - horizon + 1
    if len(values) < window or M < 1:
        raise ValueError(f"series of {len(values)} points too short for window {window} and horizon {horizon}")
    idx = np.arange(window)[None, :] + np.arange(M)[:, None]
    windows = values[idx]
    predict = model.predict_next if hasattr(model, "predict_next") else model
    for _ in range(horizon):
        nxt = np.asarray(predict(windows), dtype=float).reshape(-1)
        windows = np.hstack([windows[:, 1:], nxt[:, None]])
    return windows[:, -1], values[window + horizon - 1:window + horizon - 1 + M]


def split_series(series: pd.Series, split=0.7):
    """Chronological split at a fraction or at a timestamp."""
    if isinstance(split, float):
        k = int(round(len(series) * split))
        return series.iloc[:k], series.iloc[k:]
    return series[series.index < pd.Timestamp(split)], series[series.index >= pd.Timestamp(split)]


def run_forecast_experiment(series: pd.Series, methods=("tiht",), seeds=range(5), horizons=(1, 3, 6),
                            split=0.7, L: int = 3, window: int = 6, n_states: int = 3,
                            finetune_config: FinetuneConfig | None = FORECAST_FINETUNE) -> pd.DataFrame:
    hourly = hourly_average(series) if isinstance(series.index, pd.DatetimeIndex) else series
    train, test = split_series(hourly, split)
    rows = []
    for method in methods:
        for seed in seeds:
            ft = None if finetune_config is None else FinetuneConfig(**{**asdict(finetune_config), "seed": seed})
            fc = fit_forecaster(train.to_numpy(), L, n_states, method, ft, seed)
            for h in horizons:
                pred, targ = forecast_pipeline(test.to_numpy(), window, h, fc)
                m = metrics(pred, targ)
                rows.append({"method": method.upper() + ("+SGD" if ft else ""), "seed": seed, "horizon": h,
                             "RMSE": m["RMSE"], "MAPE": m["MAPE"], "MAE": m["MAE"],
                             "encoding": "(value, 1)"})
    return pd.DataFrame(rows)


def compare_with_published(results: pd.DataFrame) -> str:
    """Side-by-side table of averaged forecasting errors and the published reference numbers."""
    lines = [f"{'horizon':>7} {'method':<12} {'RMSE':>8} {'MAPE':>8} {'MAE':>8}   source"]
    avg = results.groupby(["horizon", "method"])[["RMSE", "MAPE", "MAE"]].mean()
    for h in sorted(results["horizon"].unique()):
        for method, row in avg.loc[h].iterrows():
            lines.append(f"{h:>7} {method:<12} {row.RMSE:8.3f} {row.MAPE:8.2f} {row.MAE:8.3f}   this run")
        for name, (rmse, mape, mae) in PUBLISHED_FORECAST_TABLES.get(int(h), {}).items():
            lines.append(f"{h:>7} {name:<12} {rmse:8.3f} {mape:8.2f} {mae:8.3f}   published")
    return "\n".join(lines)


# -- benchmarks -------------------------------------------------------------

BENCH_FIELDS = ["method", "L", "seconds", "status", "train_mse"]


def _bench_recovery(method, L, n, d, p, N, seed, target_mse, max_entries):
    model = gen_random_2rnn(n, d, p, 0.2, seed)
    ds = gen_datasets(model, L, (N, 1, 1), 0.0, seed)[0]
    cfg = RecoveryConfig(method, rank=n, seed=seed, target_mse=target_mse)
    t0 = time.perf_counter()
    H, info = recover(ds, cfg, return_info=True, max_entries=max_entries)
    return time.perf_counter() - t0, info.objective / max(N, 1)


def _bench_spectral(fmt, L, n, d, p, seed, max_entries):
    model = gen_random_2rnn(n, d, p, 0.2, seed)
    hankels = [exact_hankel(model, l, "tt") for l in (L, 2 * L, 2 * L + 1)]
    if fmt == "dense":
        size = d ** (2 * L + 1) * p
        if size > max_entries:
            raise MemoryCapExceeded(size, max_entries, "dense Hankel")
        hankels = [tt_to_dense(H, max_entries) for H in hankels]
    t0 = time.perf_counter()
    spectral_learn(*hankels, SpectralConfig(rank=n, L=L))
    return time.perf_counter() - t0, 0.0


def bench_runtime(methods, lengths, budget: float = 300.0, n: int = 3, d: int = 5, p: int = 1,
                  N: int = 1000, seed: int = 0, target_mse: float = 1e-6,
                  max_entries: int = DENSE_ENTRY_CAP, out: str | None = None) -> list[dict]:
    """Wall-clock time per (method, L).

    Methods are recovery methods (time to recover ``H^(L)`` from ``N``
    examples of length L, iterative ones stopped at ``target_mse``) or
    ``spectral_dense`` / ``spectral_tt`` (spectral learning from exact
    Hankels).  A cell over ``budget`` seconds is marked ``capped`` and larger
    L for that method are skipped; cells over the memory cap are marked
    ``memory_cap``.
    """
    rows = []
    for method in methods:
        capped = False
        for L in sorted(lengths):
            row = {"method": method, "L": L, "seconds": float("nan"), "status": "ok", "train_mse": float("nan")}
            if capped:
                row["status"] = "capped"
                rows.append(row)
                continue
            try:
                if method.startswith("spectral_"):
                    secs, mse = _bench_spectral(method.split("_", 1)[1], L, n, d, p, seed, max_entries)
                else:
                    secs, mse = _bench_recovery(method, L, n, d, p, N, seed, target_mse, max_entries)
                row.update(seconds=secs, train_mse=mse)
                if secs > budget:
                    row["status"] = "capped"
                    capped = True
            except MemoryCapExceeded:
                row["status"] = "memory_cap"
                capped = True
            rows.append(row)
    if out is not None:
        write_csv(rows, out, BENCH_FIELDS)
    return rows


def write_csv(rows, path, fields) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


def memory_table(lengths=(4, 6, 8, 10, 12, 14), n: int = 3, d: int = 5, p: int = 1, seed: int = 0,
                 max_entries: int = DENSE_ENTRY_CAP) -> list[dict]:
    """Hankel storage in GB (2**30 bytes) per length: TT and dense, raw float64 and JSON container.

    Dense JSON sizes beyond the entry cap are extrapolated from the measured
    bytes per entry of the largest materialized tensor.
    """
    model = gen_random_2rnn(n, d, p, 0.2, seed)
    gb = float(2**30)
    rows = []
    bytes_per_entry = None
    for l in lengths:
        tt = exact_hankel(model, l, "tt")
        entries = d**l * p
        row = {"L": l, "tt_raw_gb": tt.n_params * 8 / gb, "tt_json_gb": serialized_size(tt) / gb,
               "dense_raw_gb": entries * 8 / gb}
        if entries <= min(max_entries, 10**7):
            size = serialized_size(tt_to_dense(tt, max_entries))
            bytes_per_entry = size / entries
            row["dense_json_gb"] = size / gb
            row["dense_json_measured"] = True
        else:
            row["dense_json_gb"] = entries * (bytes_per_entry or 24.0) / gb
            row["dense_json_measured"] = False
        if l in PUBLISHED_MEMORY_TABLE:
            row["published_tt_gb"], row["published_dense_gb"] = PUBLISHED_MEMORY_TABLE[l]
        rows.append(row)
    return rows
