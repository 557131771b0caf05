"""Dense tensor algebra.

Dense tensors are plain C-ordered numpy arrays: the first index varies
slowest, so ``values[i1*d2*...*dp + ... + ip]`` is entry ``(i1, ..., ip)``.
Every reshape below relies on that convention, and :func:`kron_chain` is
built to agree with it.  Mode indices are 0-based.
"""
from __future__ import annotations

from functools import reduce
from typing import NamedTuple, Sequence

import numpy as np

DEFAULT_REL_TOL = 1e-10


class SVDResult(NamedTuple):
    """Thin SVD ``M = left @ diag(singular_values) @ right.T``."""

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.singular_values.shape[0])


def reshape_group(T, groups: Sequence[int]) -> np.ndarray:
    """Merge consecutive modes of ``T``.

    ``groups`` lists how many original modes go into each new mode, e.g.
    a 2x3x4x5x6 tensor grouped by ``(2, 1, 2)`` becomes 6x4x30.
    """
    T = np.asarray(T)
    groups = [int(g) for g in groups]
    if any(g < 1 for g in groups) or sum(groups) != T.ndim:
        raise ValueError(
            f"groups {groups} do not partition the {T.ndim} modes of a tensor of shape {T.shape}"
        )
    shape = []
    start = 0
    for g in groups:
        shape.append(int(np.prod(T.shape[start:start + g])))
        start += g
    return T.reshape(shape)


def mode_product(T, M, mode: int) -> np.ndarray:
    """Mode-``mode`` product ``T x_mode M``; mode size d becomes ``M.shape[0]``."""
    T = np.asarray(T)
    M = np.atleast_2d(np.asarray(M))
    if M.shape[1] != T.shape[mode]:
        raise ValueError(
            f"matrix with {M.shape[1]} columns cannot act on mode {mode} of size {T.shape[mode]}"
        )
    out = np.tensordot(M, T, axes=(1, mode))
    return np.moveaxis(out, 0, mode)


def mode_vector_product(T, v, mode: int) -> np.ndarray:
    """Contract mode ``mode`` of ``T`` with vector ``v`` (the mode disappears)."""
    T = np.asarray(T)
    v = np.asarray(v)
    if v.ndim != 1 or v.shape[0] != T.shape[mode]:
        raise ValueError(f"vector of shape {v.shape} does not match mode {mode} of size {T.shape[mode]}")
    return np.tensordot(T, v, axes=(mode, 0))


def kron_chain(vs: Sequence) -> np.ndarray:
    """Kronecker product ``v1 (x) v2 (x) ... (x) vl``."""
    vs = [np.asarray(v, dtype=float).ravel() for v in vs]
    if not vs:
        raise ValueError("kron_chain needs at least one vector")
    return reduce(np.kron, vs)


def kron_rows(X) -> np.ndarray:
    """Row-wise :func:`kron_chain` for a batch of sequences of shape (N, l, d)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 3 or X.shape[1] == 0:
        raise ValueError(f"expected a non-empty (N, l, d) batch, got shape {X.shape}")
    out = X[:, 0, :]
    for t in range(1, X.shape[1]):
        out = (out[:, :, None] * X[:, t, None, :]).reshape(X.shape[0], -1)
    return out


def _fix_signs(U, Vt):
    # largest-magnitude entry of each left vector made positive
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, Vt * signs[:, None]


def truncated_svd(M, max_rank: int | None = None, rel_tol: float = DEFAULT_REL_TOL) -> SVDResult:
    """Thin SVD keeping ``min(max_rank, #{s_i > rel_tol * s_1})`` components.

    A zero (or empty) matrix gives an empty result with rank 0.
    """
    return _truncated_svd_full(M, max_rank, rel_tol)[0]


def _truncated_svd_full(M, max_rank, rel_tol):
    # also hands back the untruncated spectrum
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {M.shape}")
    m, n = M.shape
    if m == 0 or n == 0:
        return SVDResult(np.zeros((m, 0)), np.zeros(0), np.zeros((n, 0))), np.zeros(0)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s[0] <= 0.0 or not np.isfinite(s[0]):
        r = 0
    else:
        r = int(np.count_nonzero(s > rel_tol * s[0]))
    if max_rank is not None:
        r = min(r, int(max_rank))
    Ur, Vtr = _fix_signs(U[:, :r], Vt[:r])
    return SVDResult(Ur, s[:r], Vtr.T), s


def pinv(M, rel_tol: float = DEFAULT_REL_TOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse; singular values below ``rel_tol * s_1`` count as zero."""
    M = np.asarray(M, dtype=float)
    res = truncated_svd(M, rel_tol=rel_tol)
    if res.rank == 0:
        return np.zeros(M.shape[::-1])
    return (res.right / res.singular_values) @ res.left.T


def numerical_rank(M, rel_tol: float = DEFAULT_REL_TOL) -> int:
    return truncated_svd(M, rel_tol=rel_tol).rank
