"""Vector-valued weighted automata and linear second-order RNNs.

Both models compute ``f(x_1..x_k) = omega @ h_k`` where the state evolves
by the bilinear update ``h_t[c] = sum_{a,b} h_{t-1}[a] x_t[b] A[a, b, c]``.
A WFA is the same machine restricted to one-hot inputs, with
``A[:, sigma, :]`` the transition matrix of symbol ``sigma``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import singledispatch
from typing import Hashable, Sequence

import numpy as np

from .tensor import DEFAULT_REL_TOL
from .tt import DENSE_ENTRY_CAP, TTTensor, tt_split_factorize, tt_to_dense


@dataclass(frozen=True, eq=False)
class Linear2RNN:
    h0: np.ndarray
    A: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        h0 = np.array(self.h0, dtype=float).reshape(-1)
        A = np.array(self.A, dtype=float)
        omega = np.atleast_2d(np.array(self.omega, dtype=float))
        n = h0.shape[0]
        if A.ndim != 3 or A.shape[0] != n or A.shape[2] != n:
            raise ValueError(f"transition tensor must be ({n}, d, {n}), got {A.shape}")
        if omega.shape[1] != n:
            raise ValueError(f"output matrix must be (p, {n}), got {omega.shape}")
        for name, arr in (("h0", h0), ("A", A), ("omega", omega)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_states(self) -> int:
        return self.h0.shape[0]

    @property
    def input_dim(self) -> int:
        return self.A.shape[1]

    @property
    def output_dim(self) -> int:
        return self.omega.shape[0]

    @classmethod
    def zero(cls, n_states: int, input_dim: int, output_dim: int) -> "Linear2RNN":
        return cls(np.zeros(n_states), np.zeros((n_states, input_dim, n_states)),
                   np.zeros((output_dim, n_states)))

    def is_zero(self) -> bool:
        return not (self.h0.any() or self.A.any() or self.omega.any())

    def step(self, h, x):
        return np.einsum("a,b,abc->c", h, x, self.A)

    def predict(self, X) -> np.ndarray:
        """Final outputs for a batch of equal-length sequences, shape (N, T, d) -> (N, p)."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 3 or X.shape[2] != self.input_dim:
            raise ValueError(f"expected inputs of shape (N, T, {self.input_dim}), got {X.shape}")
        N, T, d = X.shape
        n = self.n_states
        h = np.broadcast_to(self.h0, (N, n))
        flat = self.A.reshape(n * d, n)
        for t in range(T):
            h = (h[:, :, None] * X[:, t, None, :]).reshape(N, n * d) @ flat
        return h @ self.omega.T

    def change_of_basis(self, P) -> "Linear2RNN":
        """Equivalent model with hidden state ``P^{-T} h``."""
        P = np.asarray(P, dtype=float)
        Pinv_T = np.linalg.inv(P).T
        A = np.einsum("ai,ijk,ck->ajc", P, self.A, Pinv_T)
        return Linear2RNN(Pinv_T @ self.h0, A, self.omega @ P.T)

    def __eq__(self, other):
        if not isinstance(other, Linear2RNN):
            return NotImplemented
        return (np.array_equal(self.h0, other.h0) and np.array_equal(self.A, other.A)
                and np.array_equal(self.omega, other.omega))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class VvWFA:
    alpha: np.ndarray
    transitions: np.ndarray
    omega: np.ndarray
    alphabet: tuple

    def __post_init__(self):
        alphabet = tuple(self.alphabet)
        if len(set(alphabet)) != len(alphabet):
            raise ValueError("alphabet symbols must be unique")
        rnn = Linear2RNN(self.alpha, self.transitions, self.omega)
        if rnn.input_dim != len(alphabet):
            raise ValueError(f"{rnn.input_dim} transition slices for an alphabet of {len(alphabet)} symbols")
        object.__setattr__(self, "alpha", rnn.h0)
        object.__setattr__(self, "transitions", rnn.A)
        object.__setattr__(self, "omega", rnn.omega)
        object.__setattr__(self, "alphabet", alphabet)

    @property
    def n_states(self) -> int:
        return self.alpha.shape[0]

    @property
    def output_dim(self) -> int:
        return self.omega.shape[0]

    def transition(self, symbol) -> np.ndarray:
        return self.transitions[:, self.symbol_index(symbol), :]

    def symbol_index(self, symbol) -> int:
        try:
            return self.alphabet.index(symbol)
        except ValueError:
            raise ValueError(f"symbol {symbol!r} not in alphabet {self.alphabet}") from None

    def encode(self, word) -> np.ndarray:
        """One-hot encoding of ``word``, shape (len(word), |alphabet|)."""
        idx = [self.symbol_index(s) for s in word]
        out = np.zeros((len(idx), len(self.alphabet)))
        out[np.arange(len(idx)), idx] = 1.0
        return out

    def __call__(self, word) -> np.ndarray:
        return wfa_evaluate(self, word)


def wfa_evaluate(wfa: VvWFA, word: Sequence[Hashable]) -> np.ndarray:
    """``omega @ (A^{x1} ... A^{xk})^T @ alpha``."""
    v = wfa.alpha
    for symbol in word:
        v = v @ wfa.transition(symbol)
    return wfa.omega @ v


def rnn_forward(rnn: Linear2RNN, xs) -> tuple[np.ndarray, list]:
    """Run the recurrence; returns the final output and all states ``[h_0, ..., h_T]``."""
    h = rnn.h0
    states = [h]
    for x in xs:
        x = np.asarray(x, dtype=float)
        if x.shape != (rnn.input_dim,):
            raise ValueError(f"input of shape {x.shape}, expected ({rnn.input_dim},)")
        h = rnn.step(h, x)
        states.append(h)
    return rnn.omega @ h, states


def wfa_to_2rnn(wfa: VvWFA) -> Linear2RNN:
    return Linear2RNN(wfa.alpha, wfa.transitions, wfa.omega)


def rnn_to_wfa(rnn: Linear2RNN, alphabet: Sequence[Hashable] | None = None) -> VvWFA:
    if alphabet is None:
        alphabet = range(rnn.input_dim)
    return VvWFA(rnn.h0, rnn.A, rnn.omega, tuple(alphabet))


def _as_rnn(model) -> Linear2RNN:
    if isinstance(model, VvWFA):
        return wfa_to_2rnn(model)
    if isinstance(model, Linear2RNN):
        return model
    raise TypeError(f"expected a Linear2RNN or VvWFA, got {type(model).__name__}")


def hankel_tt(model, l: int) -> TTTensor:
    """Rank-n tensor train of the order-(l+1) Hankel tensor, read off the model parameters."""
    rnn = _as_rnn(model)
    if l < 1:
        raise ValueError("Hankel length must be >= 1")
    first = np.einsum("a,abc->bc", rnn.h0, rnn.A)[None]
    last = rnn.omega.T[:, :, None]
    return TTTensor([first] + [rnn.A] * (l - 1) + [last])


def exact_hankel(model, l: int, format: str = "dense", max_entries: int = DENSE_ENTRY_CAP):
    """Hankel tensor ``H[i1, ..., il, :] = f(e_i1, ..., e_il)``, dense or tensor-train."""
    tt = hankel_tt(model, l)
    if format == "tt":
        return tt
    if format == "dense":
        return tt_to_dense(tt, max_entries=max_entries)
    raise ValueError(f"unknown format {format!r}; use 'dense' or 'tt'")


def completeness_check(model, l: int, rel_tol: float = DEFAULT_REL_TOL) -> tuple[int, bool]:
    """Numerical rank of the (l, l+1) matricization of ``H^(2l)``, and whether it reaches ``n``.

    Works in the tensor-train format, so nothing of size ``d**l`` is built.
    """
    rnn = _as_rnn(model)
    split = tt_split_factorize(hankel_tt(rnn, 2 * l), l, rel_tol=rel_tol)
    rank = split.effective_rank
    return rank, rank == rnn.n_states


# -- empty-symbol augmentation ---------------------------------------------

PAD = "<lambda>"


def augment_wfa(wfa: VvWFA, pad_symbol: Hashable = PAD) -> VvWFA:
    """Add a symbol whose transition is the identity, appended last in the alphabet."""
    if pad_symbol in wfa.alphabet:
        raise ValueError(f"pad symbol {pad_symbol!r} already in the alphabet")
    eye = np.eye(wfa.n_states)[:, None, :]
    return VvWFA(wfa.alpha, np.concatenate([wfa.transitions, eye], axis=1), wfa.omega,
                 wfa.alphabet + (pad_symbol,))


def augment_rnn(rnn: Linear2RNN) -> Linear2RNN:
    """Reserve input slot ``d`` (the last) for the empty symbol, with identity transition."""
    eye = np.eye(rnn.n_states)[:, None, :]
    return Linear2RNN(rnn.h0, np.concatenate([rnn.A, eye], axis=1), rnn.omega)


def pad_transition_deviation(model) -> float:
    """Frobenius distance of the last (empty-symbol) transition slice from the identity.

    For a model learned on padded data this measures how far the estimate
    is from ignoring the pad symbol; it is reported, not bounded.
    """
    rnn = _as_rnn(model)
    return float(np.linalg.norm(rnn.A[:, -1, :] - np.eye(rnn.n_states)))


def strip_pad(model):
    """Drop the empty-symbol slice appended last by augmentation."""
    if isinstance(model, VvWFA):
        return VvWFA(model.alpha, model.transitions[:, :-1, :], model.omega, model.alphabet[:-1])
    rnn = _as_rnn(model)
    return Linear2RNN(rnn.h0, rnn.A[:, :-1, :], rnn.omega)


def pad_word(word, length: int, pad_symbol: Hashable = PAD, position: str = "left") -> tuple:
    word = tuple(word)
    if pad_symbol in word:
        raise ValueError(f"pad symbol {pad_symbol!r} occurs in the word")
    if len(word) > length:
        raise ValueError(f"word of length {len(word)} longer than target {length}")
    pad = (pad_symbol,) * (length - len(word))
    return pad + word if position == "left" else word + pad


def augment_sequences(sequences, length: int, position: str = "left") -> np.ndarray:
    """Embed continuous sequences in dimension d+1 and pad them to ``length`` with ``e_{d+1}``.

    Real inputs get a 0 in the reserved slot, so an augmented model sees
    exactly the original inputs plus identity steps.
    """
    sequences = [np.atleast_2d(np.asarray(s, dtype=float)) for s in sequences]
    dims = {s.shape[1] for s in sequences if s.size}
    if len(dims) != 1:
        raise ValueError(f"sequences must share one input dimension, found {sorted(dims)}")
    d = dims.pop()
    pad = np.zeros(d + 1)
    pad[d] = 1.0
    out = np.empty((len(sequences), length, d + 1))
    for i, s in enumerate(sequences):
        k = s.shape[0] if s.size else 0
        if k > length:
            raise ValueError(f"sequence of length {k} longer than target {length}")
        body = np.hstack([s.reshape(k, d), np.zeros((k, 1))])
        padding = np.tile(pad, (length - k, 1))
        out[i] = np.vstack([padding, body] if position == "left" else [body, padding])
    return out


@singledispatch
def augment_alphabet(obj, *args, **kwargs):
    raise TypeError(f"cannot augment {type(obj).__name__}")


@augment_alphabet.register
def _(obj: VvWFA, pad_symbol: Hashable = PAD):
    return augment_wfa(obj, pad_symbol)


@augment_alphabet.register
def _(obj: Linear2RNN):
    return augment_rnn(obj)


@augment_alphabet.register(list)
@augment_alphabet.register(tuple)
def _(obj, length: int, position: str = "left"):
    return augment_sequences(obj, length, position)
