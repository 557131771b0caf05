"""Gradient refinement of a linear 2-RNN on final-output squared error."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import SequenceDataset, rng_stream
from .models import Linear2RNN

OPTIMIZERS = ("plain_sgd", "adaptive_moments")


@dataclass
class FinetuneConfig:
    learning_rate: float = 1e-4
    epochs: int = 200
    batch_size: int = 32
    optimizer: str = "adaptive_moments"
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")


@dataclass
class FinetuneInfo:
    initial_loss: float
    best_loss: float
    best_epoch: int = 0
    history: list = field(default_factory=list)
    flags: list = field(default_factory=list)


def _forward_states(R: Linear2RNN, X):
    N, T, d = X.shape
    n = R.n_states
    flat = R.A.reshape(n * d, n)
    states = [np.broadcast_to(R.h0, (N, n))]
    for t in range(T):
        states.append((states[-1][:, :, None] * X[:, t, None, :]).reshape(N, n * d) @ flat)
    return states


def _sum_sq_and_grad(R: Linear2RNN, X, Y):
    """Sum over examples of ``||f(x) - y||^2`` and its gradient (reverse accumulation)."""
    states = _forward_states(R, X)
    err = states[-1] @ R.omega.T - Y
    g_omega = 2.0 * err.T @ states[-1]
    g = 2.0 * err @ R.omega
    g_A = np.zeros_like(R.A)
    for t in range(X.shape[1] - 1, -1, -1):
        g_A += np.einsum("na,nb,nc->abc", states[t], X[:, t], g, optimize=True)
        g = np.einsum("abc,nb,nc->na", R.A, X[:, t], g, optimize=True)
    return float(np.sum(err**2)), (g.sum(axis=0), g_A, g_omega)


def loss_and_grad(R: Linear2RNN, batch: SequenceDataset):
    """Mean over the batch of ``||f(x) - y||^2`` with gradients for ``(h0, A, omega)``."""
    N = len(batch)
    if N == 0:
        return 0.0, (np.zeros_like(R.h0), np.zeros_like(R.A), np.zeros_like(R.omega))
    loss, grads = _sum_sq_and_grad(R, batch.inputs, batch.targets)
    return loss / N, tuple(g / N for g in grads)


def training_loss(R: Linear2RNN, datasets) -> float:
    total, count = 0.0, 0
    for ds in _as_list(datasets):
        if len(ds):
            total += float(np.sum((R.predict(ds.inputs) - ds.targets) ** 2))
            count += len(ds)
    return total / count if count else 0.0


def _as_list(data):
    return [data] if isinstance(data, SequenceDataset) else list(data)


def finetune(R: Linear2RNN, data, config: FinetuneConfig | None = None, return_info: bool = False):
    """Mini-batch refinement of ``R``; returns the iterate with the lowest training loss seen.

    ``data`` is one dataset or several (of different lengths); mini-batches
    never mix lengths.  A non-finite loss stops training and reverts to the
    best iterate, with a flag in the returned info.
    """
    config = config or FinetuneConfig()
    datasets = [ds for ds in _as_list(data) if len(ds)]
    rng = rng_stream(config.seed, "batching")
    params = [np.array(R.h0), np.array(R.A), np.array(R.omega)]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    best = R
    best_loss = training_loss(R, datasets)
    info = FinetuneInfo(best_loss, best_loss)
    step = 0
    for epoch in range(1, config.epochs + 1):
        batches = []
        for k, ds in enumerate(datasets):
            order = rng.permutation(len(ds))
            batches += [(k, order[i:i + config.batch_size]) for i in range(0, len(ds), config.batch_size)]
        for j in rng.permutation(len(batches)):
            k, idx = batches[j]
            current = Linear2RNN(*params)
            _, grads = loss_and_grad(current, datasets[k].subset(idx))
            step += 1
            for i, g in enumerate(grads):
                if config.optimizer == "plain_sgd":
                    params[i] = params[i] - config.learning_rate * g
                    continue
                m[i] = config.beta1 * m[i] + (1 - config.beta1) * g
                v[i] = config.beta2 * v[i] + (1 - config.beta2) * g * g
                m_hat = m[i] / (1 - config.beta1**step)
                v_hat = v[i] / (1 - config.beta2**step)
                params[i] = params[i] - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
        with np.errstate(all="ignore"):
            loss = training_loss(Linear2RNN(*params), datasets)
        info.history.append(loss)
        if not math.isfinite(loss):
            info.flags.append(f"non-finite loss at epoch {epoch}; reverted to best iterate")
            break
        if loss < best_loss:
            best, best_loss = Linear2RNN(*params), loss
            info.best_epoch = epoch
    info.best_loss = best_loss
    return (best, info) if return_info else best
