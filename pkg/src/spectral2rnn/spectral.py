"""Spectral recovery of a linear 2-RNN from the Hankel tensors of lengths L, 2L and 2L+1.

With ``H2L`` matricized as prefixes (first L modes) by suffixes (remaining
modes, output included) and factorized ``H2L = P S``::

    h0      = pinv(S).T @ vec(H_L)
    omega.T = pinv(P) @ H_L matricized (L, 1)
    A       = H_2L1 matricized (L, 1, L+1), x_1 pinv(P), x_3 pinv(S).T

The factorization is the truncated SVD ``P = U``, ``S = diag(s) V^T``.  The
tensor-train path reaches the same SVD through :class:`~spectral2rnn.tt.TTSplit`
and never forms anything of size ``d**L``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .models import Linear2RNN, rnn_to_wfa
from .tensor import DEFAULT_REL_TOL, truncated_svd
from .tt import TTTensor, left_interface, right_interface, tt_split_factorize

AUTO_RANK_TOL = 1e-8


@dataclass
class SpectralConfig:
    rank: int | None = None
    rank_tol: float = AUTO_RANK_TOL
    L: int = 2
    format: str = "dense"

    def __post_init__(self):
        if self.rank is not None and self.rank < 0:
            raise ValueError("rank must be >= 0")
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if self.format not in ("dense", "tt"):
            raise ValueError(f"format must be 'dense' or 'tt', got {self.format!r}")


def _hankel_length(H) -> int:
    order = H.order if isinstance(H, TTTensor) else np.ndim(H)
    return order - 1


def hankel_spectrum(H_2L) -> np.ndarray:
    """Singular values of the prefix/suffix matricization of ``H^(2L)`` (either format)."""
    L = _hankel_length(H_2L) // 2
    if isinstance(H_2L, TTTensor):
        return tt_split_factorize(H_2L, L, rel_tol=0.0).singular_values
    H = np.asarray(H_2L)
    mat = H.reshape(int(np.prod(H.shape[:L])), -1)
    return np.linalg.svd(mat, compute_uv=False)


def estimate_rank(H_2L, rank_tol: float = AUTO_RANK_TOL) -> int:
    s = hankel_spectrum(H_2L)
    if s.size == 0 or s[0] <= 0:
        return 0
    return int(np.count_nonzero(s > rank_tol * s[0]))


def _select_rank(available: int, config: SpectralConfig, spectrum_rank) -> int:
    if config.rank is None:
        return spectrum_rank(config.rank_tol)
    if config.rank > available:
        warnings.warn(f"Hankel matricization has numerical rank {available} < requested {config.rank}; "
                      f"learning at rank {available}", RuntimeWarning, stacklevel=3)
    return min(config.rank, available)


def _check_orders(lengths, L):
    if lengths != (L, 2 * L, 2 * L + 1):
        raise ValueError(f"Hankel lengths {lengths} do not match (L, 2L, 2L+1) for L={L}")


def spectral_learn_dense(H_L, H_2L, H_2L1, config: SpectralConfig | None = None) -> Linear2RNN:
    H_L, H_2L, H_2L1 = (np.asarray(H, dtype=float) for H in (H_L, H_2L, H_2L1))
    L = _hankel_length(H_L)
    _check_orders((L, _hankel_length(H_2L), _hankel_length(H_2L1)), L)
    config = config or SpectralConfig(L=L)
    d, p = H_L.shape[0], H_L.shape[-1]
    rows = d**L

    svd = truncated_svd(H_2L.reshape(rows, -1), rel_tol=DEFAULT_REL_TOL)
    full = svd.singular_values

    def by_tol(tol):
        return int(np.count_nonzero(full > tol * full[0])) if full.size else 0

    n = _select_rank(svd.rank, config, by_tol)
    if n == 0:
        return Linear2RNN.zero(1, d, p)
    U, s, V = svd.left[:, :n], svd.singular_values[:n], svd.right[:, :n]
    S_pinv = V / s  # (d^L p, n)

    h0 = S_pinv.T @ H_L.reshape(-1)
    omega = (U.T @ H_L.reshape(rows, p)).T
    mid = H_2L1.reshape(rows, d, -1)
    A = np.einsum("ui,uav,vj->iaj", U, mid, S_pinv, optimize=True)
    return Linear2RNN(h0, A, omega)


def spectral_learn_tt(H_L: TTTensor, H_2L: TTTensor, H_2L1: TTTensor,
                      config: SpectralConfig | None = None) -> Linear2RNN:
    L = _hankel_length(H_L)
    _check_orders((L, _hankel_length(H_2L), _hankel_length(H_2L1)), L)
    config = config or SpectralConfig(L=L, format="tt")
    d, p = H_L.shape[0], H_L.shape[-1]

    split = tt_split_factorize(H_2L, L, rel_tol=DEFAULT_REL_TOL)
    full = split.singular_values

    def by_tol(tol):
        return int(np.count_nonzero(full > tol * full[0])) if full.size else 0

    n = _select_rank(split.effective_rank, config, by_tol)
    if n == 0:
        return Linear2RNN.zero(1, d, p)
    split = split.truncate(n)
    U, s, V = split.left, split.singular_values, split.right
    QP, QS = split.prefix_cores, split.suffix_cores

    # suffix side: Q_S . vec(H_L) -> (R,)
    suffix_h = right_interface(QS, H_L.cores)[:, 0]
    h0 = (V.T @ suffix_h) / s

    # prefix side: Q_P^T . H_L matricized (L, 1) -> (R, p)
    env = left_interface(QP, H_L.cores[:L])
    omega = (U.T @ env @ H_L.cores[L][:, :, 0]).T

    left = left_interface(QP, H_2L1.cores[:L])            # (R, r')
    right = right_interface(QS, H_2L1.cores[L + 1:])      # (R, r'')
    A = np.einsum("ai,ab,bxc,ec,ej->ixj", U, left, H_2L1.cores[L], right, V / s, optimize=True)
    return Linear2RNN(h0, A, omega)


def spectral_learn(H_L, H_2L, H_2L1, config: SpectralConfig | None = None) -> Linear2RNN:
    """Dispatch on the Hankel format."""
    if all(isinstance(H, TTTensor) for H in (H_L, H_2L, H_2L1)):
        return spectral_learn_tt(H_L, H_2L, H_2L1, config)
    return spectral_learn_dense(H_L, H_2L, H_2L1, config)


def spectral_learn_wfa(H_L, H_2L, H_2L1, alphabet=None, config: SpectralConfig | None = None):
    """Vector-valued WFA from Hankels indexed by symbols (one-hot coordinates in alphabet order)."""
    return rnn_to_wfa(spectral_learn(H_L, H_2L, H_2L1, config), alphabet)
