"""Input checks for sequence data passed to the estimator."""
from __future__ import annotations

import numpy as np

from .data import SequenceDataset


def check_sequences(X, input_dim: int | None = None) -> list[np.ndarray]:
    """Coerce ``X`` to a list of finite float arrays of shape ``(length, d)``.

    ``X`` may be a 3-d array (equal lengths) or any iterable of 2-d arrays.
    """
    if isinstance(X, np.ndarray) and X.ndim == 3:
        seqs = list(np.asarray(X, dtype=float))
    else:
        try:
            seqs = [np.asarray(s, dtype=float) for s in X]
        except (TypeError, ValueError) as exc:
            raise ValueError(f"could not read sequences: {exc}") from None
    if not seqs:
        raise ValueError("no sequences given")
    dims = set()
    for i, s in enumerate(seqs):
        if s.ndim != 2 or s.shape[0] == 0:
            raise ValueError(f"sequence {i} has shape {s.shape}; expected a non-empty (length, d) array")
        if not np.all(np.isfinite(s)):
            raise ValueError(f"sequence {i} contains NaN or inf")
        dims.add(s.shape[1])
    if len(dims) != 1:
        raise ValueError(f"sequences have different input dimensions {sorted(dims)}")
    if input_dim is not None and dims != {input_dim}:
        raise ValueError(f"expected input dimension {input_dim}, got {dims.pop()}")
    return seqs


def check_targets(y, n_samples: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2 or y.shape[0] != n_samples:
        raise ValueError(f"targets of shape {y.shape} do not match {n_samples} sequences")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets contain NaN or inf")
    return y


def group_by_length(seqs, y=None) -> dict[int, tuple]:
    """``{length: (indices, stacked inputs[, targets])}``."""
    groups: dict[int, list] = {}
    for i, s in enumerate(seqs):
        groups.setdefault(s.shape[0], []).append(i)
    out = {}
    for length, idx in sorted(groups.items()):
        idx = np.asarray(idx)
        stacked = np.stack([seqs[i] for i in idx])
        out[length] = (idx, stacked) if y is None else (idx, stacked, y[idx])
    return out


def split_training_sets(seqs, y, L: int) -> list[SequenceDataset]:
    """The datasets of lengths L, 2L, 2L+1 (other lengths are ignored)."""
    groups = group_by_length(seqs, y)
    missing = [l for l in (L, 2 * L, 2 * L + 1) if l not in groups]
    if missing:
        raise ValueError(f"training data needs sequences of lengths {L}, {2 * L} and {2 * L + 1}; "
                         f"missing {missing} (have {sorted(groups)})")
    return [SequenceDataset(groups[l][1], groups[l][2], {"length": l}) for l in (L, 2 * L, 2 * L + 1)]
