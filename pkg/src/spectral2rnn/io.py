"""File formats: model JSON, tensor containers, JSON-lines datasets, time-series CSV.

JSON floats are written with Python's shortest round-trip repr, so a model
saved and loaded again has bit-identical parameters.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from .data import SequenceDataset
from .models import Linear2RNN
from .tt import TTTensor

MODEL_FORMAT = "linear2rnn"


class SchemaError(ValueError):
    """File content does not match the expected schema."""


def _dump(obj, path):
    Path(path).write_text(json.dumps(obj, sort_keys=True) + "\n")


def _load(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None


def model_to_dict(model: Linear2RNN, metadata: dict | None = None) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": 1,
        "h0": model.h0.tolist(),
        "A": model.A.tolist(),
        "omega": model.omega.tolist(),
        "metadata": metadata or {},
    }


def model_from_dict(obj: dict) -> Linear2RNN:
    if not isinstance(obj, dict) or obj.get("format") != MODEL_FORMAT:
        raise SchemaError("not a linear 2-RNN model file")
    try:
        return Linear2RNN(obj["h0"], obj["A"], obj["omega"])
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaError(f"malformed model: {exc}") from None


def save_model(model: Linear2RNN, path, metadata: dict | None = None) -> None:
    _dump(model_to_dict(model, metadata), path)


def load_model(path) -> Linear2RNN:
    return model_from_dict(_load(path))


def tt_to_dict(T: TTTensor) -> dict:
    return {"format": "tt", "shape": list(T.shape), "ranks": list(T.ranks), "cores": [c.tolist() for c in T.cores]}


def tt_from_dict(obj: dict) -> TTTensor:
    if obj.get("format") != "tt":
        raise SchemaError("not a TT container")
    return TTTensor([np.asarray(c, dtype=float) for c in obj["cores"]])


def dense_to_dict(H) -> dict:
    H = np.asarray(H, dtype=float)
    return {"format": "dense", "shape": list(H.shape), "values": H.ravel().tolist()}


def dense_from_dict(obj: dict) -> np.ndarray:
    if obj.get("format") != "dense":
        raise SchemaError("not a dense tensor container")
    return np.asarray(obj["values"], dtype=float).reshape(obj["shape"])


def save_tensor(H, path) -> None:
    """JSON container for a dense array or a :class:`TTTensor` (``.npz`` paths use numpy's format)."""
    path = Path(path)
    if path.suffix == ".npz":
        if isinstance(H, TTTensor):
            np.savez(path, **{f"core_{k}": c for k, c in enumerate(H.cores)})
        else:
            np.savez(path, dense=np.asarray(H, dtype=float))
        return
    _dump(tt_to_dict(H) if isinstance(H, TTTensor) else dense_to_dict(H), path)


def load_tensor(path):
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path) as z:
            if "dense" in z:
                return z["dense"]
            return TTTensor([z[f"core_{k}"] for k in range(len(z.files))])
    obj = _load(path)
    return tt_from_dict(obj) if obj.get("format") == "tt" else dense_from_dict(obj)


def serialized_size(H) -> int:
    """Bytes of the JSON container of ``H``."""
    obj = tt_to_dict(H) if isinstance(H, TTTensor) else dense_to_dict(H)
    return len((json.dumps(obj, sort_keys=True) + "\n").encode())


def _meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def save_dataset(ds: SequenceDataset, path) -> None:
    """One JSON object per line, ``{"inputs": [[...], ...], "target": [...]}``; metadata in a sidecar."""
    with open(path, "w") as fh:
        for x, y in ds.examples():
            fh.write(json.dumps({"inputs": x.tolist(), "target": y.tolist()}) + "\n")
    _dump({"length": ds.length, "input_dim": ds.input_dim, "output_dim": ds.output_dim,
           "n_examples": len(ds), **ds.metadata}, _meta_path(path))


def load_dataset(path) -> SequenceDataset:
    path = Path(path)
    meta = _load(_meta_path(path)) if _meta_path(path).exists() else {}
    xs, ys = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                xs.append(np.asarray(row["inputs"], dtype=float))
                ys.append(np.asarray(row["target"], dtype=float).reshape(-1))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"{path}:{lineno}: bad example ({exc})") from None
    if not xs:
        if "length" in meta:
            return SequenceDataset(np.zeros((0, meta["length"], meta["input_dim"])),
                                   np.zeros((0, meta["output_dim"])), meta)
        raise SchemaError(f"{path}: empty dataset")
    if len({x.shape for x in xs}) != 1 or len({y.shape for y in ys}) != 1:
        raise SchemaError(f"{path}: examples must share one length and dimension")
    return SequenceDataset(np.stack(xs), np.stack(ys), meta)


def load_series_csv(path, value_column: str | None = None) -> pd.Series:
    """Time series from a CSV with a timestamp column first and a value column."""
    df = pd.read_csv(path)
    if df.shape[1] < 2:
        raise SchemaError(f"{path}: expected timestamp and value columns")
    col = value_column or df.columns[1]
    return pd.Series(df[col].to_numpy(dtype=float), index=pd.to_datetime(df.iloc[:, 0]), name=col)
