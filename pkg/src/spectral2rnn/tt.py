"""Tensor-train format.

A :class:`TTTensor` stores its cores uniformly as 3-way arrays
``(r_{k-1}, d_k, r_k)`` with boundary ranks ``r_0 = r_p = 1``; entry
``(i1, ..., ip)`` is the matrix product ``G1[:, i1, :] @ ... @ Gp[:, ip, :]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import MemoryCapExceeded
from .tensor import DEFAULT_REL_TOL, _truncated_svd_full, truncated_svd

DENSE_ENTRY_CAP = 10**8


class TTTensor:
    def __init__(self, cores: Sequence[np.ndarray]):
        cores = [np.asarray(c, dtype=float) for c in cores]
        if not cores:
            raise ValueError("a tensor train needs at least one core")
        if any(c.ndim != 3 for c in cores):
            raise ValueError("cores must be 3-way arrays (r_prev, d, r_next)")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        for a, b in zip(cores[:-1], cores[1:]):
            if a.shape[2] != b.shape[0]:
                raise ValueError(f"rank mismatch between cores: {a.shape} then {b.shape}")
        self.cores = cores

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def shape(self) -> tuple:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple:
        """Internal bond dimensions ``(r_1, ..., r_{p-1})``."""
        return tuple(c.shape[2] for c in self.cores[:-1])

    @property
    def n_params(self) -> int:
        return int(sum(c.size for c in self.cores))

    def copy(self) -> "TTTensor":
        return TTTensor([c.copy() for c in self.cores])

    def __getitem__(self, index):
        return tt_entry(self, index)

    def full(self, max_entries: int = DENSE_ENTRY_CAP) -> np.ndarray:
        return tt_to_dense(self, max_entries=max_entries)

    def norm(self) -> float:
        return float(np.sqrt(max(tt_inner(self, self), 0.0)))

    def __repr__(self):
        return f"TTTensor(shape={self.shape}, ranks={self.ranks})"


def _tt_svd(T, max_rank, rel_tol):
    T = np.asarray(T, dtype=float)
    if T.ndim == 0:
        raise ValueError("tt_svd needs a tensor of order >= 1")
    dims = T.shape
    cores = []
    discarded = 0.0
    rest = T.reshape(1, -1)
    r_prev = 1
    for d in dims[:-1]:
        mat = rest.reshape(r_prev * d, -1)
        res, full = _truncated_svd_full(mat, max_rank, rel_tol)
        r = res.rank
        discarded += float(np.sum(full[r:] ** 2))
        if r == 0:
            U = np.zeros((mat.shape[0], 1))
            U[0, 0] = 1.0
            rest = np.zeros((1, mat.shape[1]))
            r = 1
        else:
            U = res.left
            rest = res.singular_values[:, None] * res.right.T
        cores.append(U.reshape(r_prev, d, r))
        r_prev = r
    cores.append(rest.reshape(r_prev, dims[-1], 1))
    return TTTensor(cores), discarded


def tt_svd(T, max_rank: int | None = None, rel_tol: float = DEFAULT_REL_TOL) -> TTTensor:
    """TT-SVD: left-to-right sweep of truncated SVDs over the sequential unfoldings.

    Each unfolding keeps singular values above ``rel_tol`` times its largest
    one, and at most ``max_rank`` of them.  All cores but the last are
    left-orthogonal.
    """
    return _tt_svd(T, max_rank, rel_tol)[0]


def tt_svd_with_error(T, max_rank=None, rel_tol=DEFAULT_REL_TOL):
    """As :func:`tt_svd`, also returning the total squared singular-value mass discarded."""
    return _tt_svd(T, max_rank, rel_tol)


def _check_index(T: TTTensor, index):
    index = tuple(int(i) for i in np.atleast_1d(index))
    if len(index) != T.order:
        raise IndexError(f"index of length {len(index)} for a tensor of order {T.order}")
    for i, d in zip(index, T.shape):
        if not 0 <= i < d:
            raise IndexError(f"index {index} out of bounds for shape {T.shape}")
    return index


def tt_entry(T: TTTensor, index) -> float:
    index = _check_index(T, index)
    v = np.ones(1)
    for core, i in zip(T.cores, index):
        v = v @ core[:, i, :]
    return float(v[0])


def tt_to_dense(T: TTTensor, max_entries: int = DENSE_ENTRY_CAP) -> np.ndarray:
    n = int(np.prod(T.shape, dtype=object))
    if n > max_entries:
        raise MemoryCapExceeded(n, max_entries)
    out = T.cores[0].reshape(T.shape[0], -1)
    for core in T.cores[1:]:
        r, d, r2 = core.shape
        out = (out @ core.reshape(r, d * r2)).reshape(-1, r2)
    return out.reshape(T.shape)


def tt_contract_sequence(T: TTTensor, xs) -> np.ndarray:
    """Contract the leading modes of ``T`` with the vectors ``xs``.

    With ``len(xs) == order - 1`` the last (output) mode is left free and a
    vector is returned; with ``len(xs) == order`` the result is a scalar
    array of shape ``()``.
    """
    xs = [np.asarray(x, dtype=float) for x in xs]
    if len(xs) not in (T.order - 1, T.order):
        raise ValueError(f"{len(xs)} vectors for a tensor of order {T.order}")
    v = np.ones(1)
    for k, x in enumerate(xs):
        core = T.cores[k]
        if x.shape != (core.shape[1],):
            raise ValueError(f"input {k} has shape {x.shape}, mode size is {core.shape[1]}")
        v = v @ np.tensordot(core, x, axes=(1, 0))
    if len(xs) == T.order:
        return np.asarray(v[0])
    last = T.cores[-1][:, :, 0]
    return v @ last


def tt_contract_batch(T: TTTensor, X) -> np.ndarray:
    """Batched :func:`tt_contract_sequence` over inputs of shape (N, order-1, d); returns (N, p)."""
    X = np.asarray(X, dtype=float)
    N, l, _ = X.shape
    if l != T.order - 1:
        raise ValueError(f"sequences of length {l} for a tensor of order {T.order}")
    v = np.ones((N, 1))
    for k in range(l):
        M = np.einsum("aib,ni->nab", T.cores[k], X[:, k, :])
        v = np.einsum("na,nab->nb", v, M)
    return v @ T.cores[-1][:, :, 0]


def tt_inner(A: TTTensor, B: TTTensor) -> float:
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    return float(left_interface(A.cores, B.cores)[0, 0])


def left_interface(a_cores, b_cores) -> np.ndarray:
    """Sum over all shared modes of two TT prefixes; returns an (r_a, r_b) matrix.

    Both prefixes must start at boundary rank 1 and have matching mode sizes.
    """
    E = np.ones((1, 1))
    for a, b in zip(a_cores, b_cores):
        E = np.einsum("ab,aic,bid->cd", E, a, b, optimize=True)
    return E


def right_interface(a_cores, b_cores) -> np.ndarray:
    """Mirror of :func:`left_interface` for suffixes ending at boundary rank 1."""
    E = np.ones((1, 1))
    for a, b in zip(reversed(a_cores), reversed(b_cores)):
        E = np.einsum("aic,bid,cd->ab", a, b, E, optimize=True)
    return E


def _qr_pos(M):
    Q, R = np.linalg.qr(M)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs, R * signs[:, None]


def _left_orth_step(core):
    r0, d, r1 = core.shape
    Q, R = _qr_pos(core.reshape(r0 * d, r1))
    return Q.reshape(r0, d, Q.shape[1]), R


def _right_orth_step(core):
    r0, d, r1 = core.shape
    Q, R = _qr_pos(core.reshape(r0, d * r1).T)
    return Q.T.reshape(Q.shape[1], d, r1), R.T


def tt_orthogonalize(T: TTTensor, pivot: int) -> TTTensor:
    """Gauge ``T`` so cores left of ``pivot`` are left-orthogonal and cores right of it right-orthogonal.

    QR factors carry a non-negative diagonal, so the result is reproducible.
    """
    p = T.order
    if not 0 <= pivot < p:
        raise ValueError(f"pivot {pivot} outside 0..{p - 1}")
    cores = [c.copy() for c in T.cores]
    for k in range(pivot):
        cores[k], R = _left_orth_step(cores[k])
        cores[k + 1] = np.tensordot(R, cores[k + 1], axes=(1, 0))
    for k in range(p - 1, pivot, -1):
        cores[k], L = _right_orth_step(cores[k])
        cores[k - 1] = np.tensordot(cores[k - 1], L, axes=(2, 0))
    return TTTensor(cores)


def tt_round(T: TTTensor, max_rank: int | None = None, rel_tol: float = DEFAULT_REL_TOL) -> TTTensor:
    """Recompress ``T``: right-orthogonalize, then sweep truncated SVDs left to right."""
    cores = tt_orthogonalize(T, 0).cores
    for k in range(T.order - 1):
        r0, d, r1 = cores[k].shape
        res = truncated_svd(cores[k].reshape(r0 * d, r1), max_rank=max_rank, rel_tol=rel_tol)
        if res.rank == 0:
            return _zero_tt(T.shape)
        cores[k] = res.left.reshape(r0, d, res.rank)
        carry = res.singular_values[:, None] * res.right.T
        cores[k + 1] = np.tensordot(carry, cores[k + 1], axes=(1, 0))
    return TTTensor(cores)


def _zero_tt(shape) -> TTTensor:
    return TTTensor([np.zeros((1, d, 1)) for d in shape])


def tt_change_of_basis(T: TTTensor, M) -> TTTensor:
    """Insert ``M^{-1} M`` on every internal bond; the represented tensor is unchanged."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n) or any(r != n for r in T.ranks):
        raise ValueError(f"change of basis needs all ranks equal to {n}; ranks are {T.ranks}")
    if np.linalg.cond(M) >= 1e12:
        raise np.linalg.LinAlgError("change-of-basis matrix is singular to working precision")
    Minv = np.linalg.inv(M)
    if T.order == 1:
        return T.copy()
    cores = [np.tensordot(T.cores[0], Minv, axes=(2, 0))]
    for core in T.cores[1:-1]:
        cores.append(np.einsum("ab,bic,cd->aid", M, core, Minv))
    cores.append(np.tensordot(M, T.cores[-1], axes=(1, 0)))
    return TTTensor(cores)


@dataclass
class TTSplit:
    """Factorization of a TT tensor across the bond after ``len(prefix_cores)`` modes.

    The matricization splitting the first ``L`` modes from the rest equals
    ``Q_P @ boundary @ Q_S`` where ``Q_P`` (the contracted prefix cores) has
    orthonormal columns and ``Q_S`` (the contracted suffix cores) has
    orthonormal rows.  The SVD of the small ``boundary`` matrix is therefore
    an SVD of the full matricization.
    """

    prefix_cores: list
    suffix_cores: list
    boundary: np.ndarray
    rel_tol: float = DEFAULT_REL_TOL
    prefix_orthogonal: bool = True
    suffix_orthogonal: bool = True
    left: np.ndarray = field(init=False, repr=False)
    singular_values: np.ndarray = field(init=False)
    right: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        res = truncated_svd(self.boundary, rel_tol=self.rel_tol)
        self.left, self.singular_values, self.right = res

    @property
    def effective_rank(self) -> int:
        return int(self.singular_values.shape[0])

    def truncate(self, rank: int) -> "TTSplit":
        out = TTSplit(self.prefix_cores, self.suffix_cores, self.boundary, self.rel_tol)
        r = min(int(rank), out.effective_rank)
        out.left, out.singular_values, out.right = out.left[:, :r], out.singular_values[:r], out.right[:, :r]
        return out

    def to_tt(self) -> TTTensor:
        cores = list(self.prefix_cores) + [np.tensordot(self.boundary, self.suffix_cores[0], axes=(1, 0))]
        return TTTensor(cores + list(self.suffix_cores[1:]))

    # dense views, for diagnostics and tests on small instances
    def prefix_matrix(self) -> np.ndarray:
        """``P = Q_P @ U`` as a dense (prod(prefix dims), rank) matrix."""
        return _chain_rows(self.prefix_cores) @ self.left

    def suffix_matrix(self) -> np.ndarray:
        """``S = diag(s) V^T Q_S`` as a dense (rank, prod(suffix dims)) matrix."""
        return (self.singular_values[:, None] * self.right.T) @ _chain_cols(self.suffix_cores)


def _chain_rows(cores):
    out = np.ones((1, 1))
    for core in cores:
        r, d, r2 = core.shape
        out = (out @ core.reshape(r, d * r2)).reshape(-1, r2)
    return out


def _chain_cols(cores):
    out = np.ones((1, 1))
    for core in reversed(cores):
        r, d, r2 = core.shape
        out = (core.reshape(r * d, r2) @ out).reshape(r, -1)
    return out


def tt_split_factorize(H: TTTensor, split: int, rel_tol: float = DEFAULT_REL_TOL) -> TTSplit:
    """Split ``H`` into a left-orthogonal prefix of ``split`` cores and a right-orthogonal suffix."""
    if not 1 <= split < H.order:
        raise ValueError(f"split {split} needs 1 <= split < order ({H.order})")
    cores = [c.copy() for c in H.cores]
    R = np.ones((1, 1))
    for k in range(split):
        cores[k], R = _left_orth_step(np.tensordot(R, cores[k], axes=(1, 0)))
    Lmat = np.ones((1, 1))
    for k in range(H.order - 1, split - 1, -1):
        cores[k], Lmat = _right_orth_step(np.tensordot(cores[k], Lmat, axes=(2, 0)))
    return TTSplit(cores[:split], cores[split:], R @ Lmat, rel_tol)
