"""Sequence datasets and synthetic generators."""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .models import Linear2RNN


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for the named substream (``"data"``, ``"init"``, ``"batching"``...)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


@dataclass
class SequenceDataset:
    """Equal-length input sequences ``(N, l, d)`` with final-step targets ``(N, p)``."""

    inputs: np.ndarray
    targets: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.targets.ndim == 1:
            self.targets = self.targets[:, None]
        if self.inputs.ndim != 3:
            raise ValueError(f"inputs must be (N, l, d), got shape {self.inputs.shape}")
        if self.targets.shape[0] != self.inputs.shape[0]:
            raise ValueError(f"{self.inputs.shape[0]} input sequences but {self.targets.shape[0]} targets")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def length(self) -> int:
        return self.inputs.shape[1]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[2]

    @property
    def output_dim(self) -> int:
        return self.targets.shape[1]

    def subset(self, idx) -> "SequenceDataset":
        return SequenceDataset(self.inputs[idx], self.targets[idx], dict(self.metadata))

    def examples(self):
        for x, y in zip(self.inputs, self.targets):
            yield x, y


def gen_random_2rnn(n: int, d: int, p: int, param_std: float = 0.2, seed: int = 0) -> Linear2RNN:
    """Linear 2-RNN with i.i.d. N(0, param_std^2) entries in ``h0``, ``A`` and ``omega``."""
    if min(n, d, p) < 1:
        raise ValueError("n, d and p must all be >= 1")
    rng = rng_stream(seed, "model")
    h0 = rng.normal(0.0, 1.0, n) * param_std
    A = rng.normal(0.0, 1.0, (n, d, n)) * param_std
    omega = rng.normal(0.0, 1.0, (p, n)) * param_std
    return Linear2RNN(h0, A, omega)


def sample_dataset(model: Linear2RNN, length: int, size: int, noise_std: float,
                   rng: np.random.Generator, input_fn=None) -> SequenceDataset:
    X = rng.standard_normal((size, length, model.input_dim if input_fn is None else input_fn.raw_dim))
    if input_fn is not None:
        X = input_fn(X)
    Y = model.predict(X) if size else np.zeros((0, model.output_dim))
    if noise_std > 0:
        Y = Y + noise_std * rng.standard_normal(Y.shape)
    return SequenceDataset(X, Y, {"length": length, "noise_std": noise_std})


def gen_datasets(model: Linear2RNN, L: int, sizes, noise_std: float = 0.0, seed: int = 0,
                 input_fn=None) -> list[SequenceDataset]:
    """Training sets of lengths L, 2L, 2L+1 with standard normal inputs and Gaussian output noise."""
    if L < 1:
        raise ValueError("L must be >= 1")
    if np.isscalar(sizes):
        sizes = (sizes,) * 3
    rng = rng_stream(seed, "data")
    out = []
    for length, size in zip((L, 2 * L, 2 * L + 1), sizes):
        ds = sample_dataset(model, length, int(size), noise_std, rng, input_fn)
        ds.metadata.update(seed=seed, generator="gaussian-inputs")
        out.append(ds)
    return out


def gen_test_set(model: Linear2RNN, size: int = 1000, length: int = 6, seed: int = 0,
                 input_fn=None) -> SequenceDataset:
    """Noiseless held-out sequences (1000 of length 6 in the synthetic experiments)."""
    ds = sample_dataset(model, length, size, 0.0, rng_stream(seed, "test"), input_fn)
    ds.metadata.update(seed=seed, split="test")
    return ds


class BiasAugment:
    """Appends a constant 1 to every input vector."""

    def __init__(self, raw_dim: int):
        self.raw_dim = raw_dim

    def __call__(self, X):
        return np.concatenate([X, np.ones(X.shape[:-1] + (1,))], axis=-1)


def addition_reference_model() -> Linear2RNN:
    """Two-unit linear 2-RNN computing ``sum_t (x_t[1] - x_t[0])`` on inputs ``(x[0], x[1], 1)``.

    State is ``(1, running sum)``; the bias coordinate keeps the first unit
    at 1 and copies the running sum forward.
    """
    A = np.zeros((2, 3, 2))
    A[0, 2, 0] = 1.0
    A[1, 2, 1] = 1.0
    A[0, 0, 1] = -1.0
    A[0, 1, 1] = 1.0
    return Linear2RNN(np.array([1.0, 0.0]), A, np.array([[0.0, 1.0]]))


def addition_function(xs) -> float:
    """Direct evaluation of the running-difference sum on raw 2-d inputs."""
    xs = np.asarray(xs, dtype=float).reshape(-1, 2)
    return float(np.sum(xs[:, 1] - xs[:, 0]))


def gen_addition_dataset(sizes, L: int = 2, noise_std: float = 0.0, seed: int = 0):
    """Addition-task training sets (inputs bias-augmented to dimension 3) and the reference model."""
    model = addition_reference_model()
    return gen_datasets(model, L, sizes, noise_std, seed, input_fn=BiasAugment(2)), model
