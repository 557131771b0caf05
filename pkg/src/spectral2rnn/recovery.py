"""Hankel tensor recovery from input/output examples.

An example ``((x_1, ..., x_l), y)`` of a linear 2-RNN is a linear measurement
of the Hankel tensor: ``y = H^(l) matricized (l, 1)^T @ (x_1 kron ... kron x_l)``.
Stacking examples gives ``Y = X W`` with ``W`` the ``(d**l, p)`` matricization.

Dense methods (least squares, nuclear norm, IHT, TIHT) build ``X``; the
tensor-train methods (ALS, SGD) only ever touch per-example factor vectors.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import SequenceDataset, rng_stream
from .exceptions import MemoryCapExceeded, RecoveryDivergence
from .tensor import kron_rows, truncated_svd
from .tt import DENSE_ENTRY_CAP, TTTensor, tt_svd, tt_to_dense

METHODS = ("least_squares", "nuclear_norm", "iht", "tiht", "als", "sgd")
TT_METHODS = ("als", "sgd")
DEFAULT_MAX_ITERS = {"iht": 10000, "tiht": 10000, "nuclear_norm": 5000, "als": 200, "sgd": 500}


@dataclass
class RecoveryConfig:
    method: str = "least_squares"
    rank: int | None = None
    step_size: float | None = None
    epsilon: float = 0.0
    max_iters: int | None = None
    conv_tol: float = 1e-8
    batch_size: int | None = None
    seed: int = 0
    target_mse: float | None = None
    init_std: float = 0.1

    def __post_init__(self):
        self.method = self.method.lower().replace("-", "_")
        if self.method not in METHODS:
            raise ValueError(f"unknown recovery method {self.method!r}; choose from {METHODS}")
        if self.rank is not None and self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.step_size is not None and self.step_size < 0:
            raise ValueError("step size must be >= 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def iterations(self) -> int:
        return self.max_iters if self.max_iters is not None else DEFAULT_MAX_ITERS.get(self.method, 1)

    def require_rank(self) -> int:
        if self.rank is None:
            raise ValueError(f"method {self.method!r} needs a target rank")
        return self.rank


@dataclass
class MeasurementSystem:
    factors: np.ndarray          # (N, l, d)
    Y: np.ndarray                # (N, p)
    X: np.ndarray | None = None  # (N, d**l) when materialized

    @property
    def n_examples(self) -> int:
        return self.factors.shape[0]

    @property
    def length(self) -> int:
        return self.factors.shape[1]

    @property
    def input_dim(self) -> int:
        return self.factors.shape[2]

    @property
    def output_dim(self) -> int:
        return self.Y.shape[1]

    @property
    def hankel_shape(self) -> tuple:
        return (self.input_dim,) * self.length + (self.output_dim,)

    def design(self) -> np.ndarray:
        if self.X is None:
            raise ValueError("this method needs a materialized design matrix (build_measurements(materialize=True))")
        return self.X


@dataclass
class RecoveryInfo:
    method: str
    n_iter: int = 0
    converged: bool = True
    seconds: float = 0.0
    objective: float = float("nan")
    history: list = field(default_factory=list)
    flags: list = field(default_factory=list)


def build_measurements(dataset: SequenceDataset, materialize: bool = True,
                       max_entries: int = DENSE_ENTRY_CAP) -> MeasurementSystem:
    """Measurement system of one fixed-length dataset; ``X`` rows are Kronecker products of the inputs."""
    factors = np.asarray(dataset.inputs, dtype=float)
    if factors.ndim != 3:
        raise ValueError("all sequences of a measurement system must share one length")
    N, l, d = factors.shape
    X = None
    if materialize:
        n = N * d**l
        if n > max_entries:
            raise MemoryCapExceeded(n, max_entries, "design matrix")
        X = kron_rows(factors) if N else np.zeros((0, d**l))
    return MeasurementSystem(factors, np.asarray(dataset.targets, dtype=float), X)


def _as_system(M) -> MeasurementSystem:
    return build_measurements(M) if isinstance(M, SequenceDataset) else M


def _finish(W, M, info, return_info, t0):
    info.seconds = time.perf_counter() - t0
    H = W.reshape(M.hankel_shape)
    return (H, info) if return_info else H


# -- least squares ----------------------------------------------------------

def recover_least_squares(M, config: RecoveryConfig | None = None, return_info: bool = False):
    """Minimum-norm least-squares Hankel."""
    t0 = time.perf_counter()
    M = _as_system(M)
    X = M.design()
    W, _, rank, _ = np.linalg.lstsq(X, M.Y, rcond=None)
    info = RecoveryInfo("least_squares", n_iter=1)
    if rank < X.shape[1]:
        info.flags.append(f"underdetermined: design rank {rank} < {X.shape[1]}")
    info.objective = float(np.sum((X @ W - M.Y) ** 2))
    return _finish(W, M, info, return_info, t0)


# -- shared helpers for the dense iterative methods -------------------------

def spectral_norm_sq(X, n_iter: int = 20, seed: int = 0) -> float:
    """Estimate of ``sigma_max(X)**2`` by power iteration on ``X^T X``."""
    if X.size == 0:
        return 0.0
    v = np.random.default_rng(seed).standard_normal(X.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(n_iter):
        w = X.T @ (X @ v)
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
    return lam


def _balanced_shape(M: MeasurementSystem) -> tuple:
    l, d, p = M.length, M.input_dim, M.output_dim
    k = math.ceil(l / 2)
    return d**k, d ** (l - k) * p


def _svt(W, shape, thresh):
    U, s, Vt = np.linalg.svd(W.reshape(shape), full_matrices=False)
    s = np.maximum(s - thresh, 0.0)
    keep = s > 0
    return ((U[:, keep] * s[keep]) @ Vt[keep]).reshape(W.shape), float(s.sum())


# -- nuclear norm -----------------------------------------------------------

def _nuclear_norm_penalized(X, Y, lam, lip, shape, W0, max_iters, conv_tol):
    """Accelerated proximal gradient (with adaptive restart) on 0.5||XW-Y||^2 + lam ||W||_*."""
    W = W0.copy()
    Z = W.copy()
    t = 1.0
    obj_prev = np.inf
    XtY = X.T @ Y
    XtX = X.T @ X
    n_iter = 0
    converged = False
    for n_iter in range(1, max_iters + 1):
        grad = XtX @ Z - XtY
        W_new, nuc = _svt(Z - grad / lip, shape, lam / lip)
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        if np.sum((Z - W_new) * (W_new - W)) > 0:  # restart momentum
            t_new = 1.0
            Z = W_new
        else:
            Z = W_new + ((t - 1) / t_new) * (W_new - W)
        W, t = W_new, t_new
        obj = 0.5 * float(np.sum((X @ W - Y) ** 2)) + lam * nuc
        if abs(obj_prev - obj) <= conv_tol * max(abs(obj), 1e-300):
            converged = True
            break
        obj_prev = obj
    return W, n_iter, converged


def _nuclear_norm_equality(X, Y, shape, max_iters, conv_tol):
    """ADMM for min ||mat(W)||_* over the least-squares solutions of X W = Y."""
    X_pinv = np.linalg.pinv(X, rcond=1e-12)

    def project(V):
        return V - X_pinv @ (X @ V - Y)

    W = project(np.zeros((X.shape[1], Y.shape[1])))
    Z = W.copy()
    U = np.zeros_like(W)
    rho = 1.0 / max(float(np.linalg.norm(W.reshape(shape), 2)), 1e-300)
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iters + 1):
        W = project(Z - U)
        Z_prev = Z
        Z, _ = _svt(W + U, shape, 1.0 / rho)
        U = U + W - Z
        scale = max(float(np.linalg.norm(W)), 1e-300)
        primal = float(np.linalg.norm(W - Z))
        dual = rho * float(np.linalg.norm(Z - Z_prev))
        if primal <= conv_tol * scale and float(np.linalg.norm(Z - Z_prev)) <= conv_tol * scale:
            converged = True
            break
        # residual balancing; U is the scaled dual so it rescales with rho
        if primal > 10 * dual:
            rho *= 2.0
            U /= 2.0
        elif dual > 10 * primal:
            rho /= 2.0
            U *= 2.0
    return W, n_iter, converged


def recover_nuclear_norm(M, config: RecoveryConfig | None = None, return_info: bool = False):
    """Nuclear-norm recovery with residual tolerance ``epsilon``.

    The constraint ``||X W - Y||_F <= epsilon`` is handled through the
    penalized problem, with the penalty found by bisection so the residual
    falls within 10% of ``epsilon``.  ``epsilon = 0`` is the limit of a
    vanishing penalty: the smallest nuclear norm among least-squares
    solutions, found by ADMM.
    """
    t0 = time.perf_counter()
    config = config or RecoveryConfig("nuclear_norm")
    M = _as_system(M)
    X, Y = M.design(), M.Y
    info = RecoveryInfo("nuclear_norm")
    shape = _balanced_shape(M)
    W = np.zeros((X.shape[1], Y.shape[1]))
    y_norm = float(np.linalg.norm(Y))
    if config.epsilon >= y_norm or y_norm == 0.0:
        info.objective = y_norm**2
        return _finish(W, M, info, return_info, t0)

    lip = spectral_norm_sq(X, seed=config.seed) * 1.01
    lam_max = float(np.linalg.norm((X.T @ Y).reshape(shape), 2))
    iters = config.iterations

    def solve(lam, W0):
        W_, n, ok = _nuclear_norm_penalized(X, Y, lam, lip, shape, W0, iters, config.conv_tol)
        info.n_iter += n
        info.converged &= ok
        return W_, float(np.linalg.norm(X @ W_ - Y))

    eps = config.epsilon
    if eps == 0.0:
        W, n, ok = _nuclear_norm_equality(X, Y, shape, iters, config.conv_tol)
        info.n_iter += n
        info.converged &= ok
        info.history.append((0.0, float(np.linalg.norm(X @ W - Y))))
    else:
        lo, hi = math.log(lam_max * 1e-12), math.log(lam_max)
        W_lo, res_lo = solve(math.exp(lo), W)
        info.history.append((math.exp(lo), res_lo))
        W = W_lo
        if res_lo <= 1.1 * eps:
            W_hi = np.zeros_like(W)
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                W_mid, res = solve(math.exp(mid), W_lo)
                info.history.append((math.exp(mid), res))
                if res > 1.1 * eps:
                    hi, W_hi = mid, W_mid
                else:
                    lo, W_lo = mid, W_mid
                    if res >= 0.9 * eps:
                        break
            W = W_lo
        else:
            info.flags.append("epsilon below the attainable residual; returning the smallest-penalty solution")
    if not info.converged:
        warnings.warn("nuclear-norm solver hit max_iters; returning the last iterate", RuntimeWarning, stacklevel=2)
        info.flags.append("max_iters reached")
    info.objective = float(np.sum((X @ W - Y) ** 2))
    return _finish(W, M, info, return_info, t0)


# -- iterative hard thresholding -------------------------------------------

def _project_matrix(W, shape, rank):
    res = truncated_svd(W.reshape(shape), max_rank=rank, rel_tol=0.0)
    return ((res.left * res.singular_values) @ res.right.T).reshape(W.shape)


def _project_tt(W, hankel_shape, rank):
    return tt_to_dense(tt_svd(W.reshape(hankel_shape), max_rank=rank, rel_tol=0.0)).reshape(W.shape)


def _hard_thresholding(M, config, project, name, return_info):
    t0 = time.perf_counter()
    M = _as_system(M)
    X, Y = M.design(), M.Y
    rank = config.require_rank()
    info = RecoveryInfo(name, converged=False)
    gamma = config.step_size
    if gamma is None:
        s2 = spectral_norm_sq(X, seed=config.seed)
        gamma = 1.0 / s2 if s2 > 0 else 0.0
    W = np.zeros((X.shape[1], Y.shape[1]))
    res0 = float(np.linalg.norm(Y))
    N = max(M.n_examples, 1)
    for it in range(1, config.iterations + 1):
        W_new = project(W + gamma * (X.T @ (Y - X @ W)), rank)
        if not np.all(np.isfinite(W_new)):
            raise RecoveryDivergence(f"{name}: non-finite iterate at iteration {it}; try a smaller step size")
        res = float(np.linalg.norm(X @ W_new - Y))
        if res > 10.0 * res0 and res > 1e-12:
            raise RecoveryDivergence(
                f"{name}: residual grew from {res0:.3e} to {res:.3e} at iteration {it} (step size {gamma:.3e})")
        change = float(np.linalg.norm(W_new - W))
        scale = max(float(np.linalg.norm(W_new)), 1e-300)
        W = W_new
        info.n_iter = it
        info.history.append(res)
        if change <= config.conv_tol * scale or (
                config.target_mse is not None and res**2 / N <= config.target_mse):
            info.converged = True
            break
    info.objective = float(np.sum((X @ W - Y) ** 2))
    return _finish(W, M, info, return_info, t0)


def recover_iht(M, config: RecoveryConfig, return_info: bool = False):
    """Projected gradient descent onto rank-``R`` balanced matricizations."""
    M = _as_system(M)
    shape = _balanced_shape(M)
    return _hard_thresholding(M, config, lambda W, r: _project_matrix(W, shape, r), "iht", return_info)


def recover_tiht(M, config: RecoveryConfig, return_info: bool = False):
    """Projected gradient descent onto TT-rank-``R`` tensors (TT-SVD projection)."""
    M = _as_system(M)
    hs = M.hankel_shape
    return _hard_thresholding(M, config, lambda W, r: _project_tt(W, hs, r), "tiht", return_info)


# -- tensor-train methods ---------------------------------------------------

def init_tt_cores(l: int, d: int, p: int, rank: int, std: float, rng) -> list:
    """Random cores for an order-(l+1) Hankel; bonds capped at their largest useful size."""
    ranks = [1]
    for k in range(1, l + 1):
        ranks.append(min(rank, d**k, d ** (l - k) * p))
    ranks.append(1)
    dims = [d] * l + [p]
    return [rng.normal(0.0, std, (ranks[k], dims[k], ranks[k + 1])) for k in range(l + 1)]


def _transfer(core, X_k):
    # per-example matrices core x_2 x_k: (N, r, r')
    return np.einsum("aib,ni->nab", core, X_k, optimize=True)


def _right_envs(cores, X):
    """``envs[k]`` is (N, r_k, p): cores k..l contracted with inputs k..l-1."""
    l = X.shape[1]
    N = X.shape[0]
    envs = [None] * (l + 1)
    envs[l] = np.broadcast_to(cores[l][:, :, 0], (N,) + cores[l].shape[:2])
    for k in range(l - 1, -1, -1):
        envs[k] = np.einsum("nab,nbo->nao", _transfer(cores[k], X[:, k]), envs[k + 1], optimize=True)
    return envs


def tt_predict(cores, X) -> np.ndarray:
    return _right_envs(cores, X)[0][:, 0, :]


def tt_loss_and_grad(cores, X, Y):
    """Mean squared error ``mean_i ||f(x_i) - y_i||^2`` and its gradient with respect to every core."""
    N = X.shape[0]
    l = X.shape[1]
    right = _right_envs(cores, X)
    err = right[0][:, 0, :] - Y
    loss = float(np.sum(err**2)) / N
    grads = []
    left = np.ones((N, 1))
    for k in range(l):
        grads.append((2.0 / N) * np.einsum("na,ni,nbo,no->aib", left, X[:, k], right[k + 1], err, optimize=True))
        left = np.einsum("na,nab->nb", left, _transfer(cores[k], X[:, k]))
    grads.append((2.0 / N) * np.einsum("na,no->ao", left, err)[:, :, None])
    return loss, grads


def _tt_objective(cores, X, Y):
    return float(np.sum((tt_predict(cores, X) - Y) ** 2))


def recover_tt_als(M, config: RecoveryConfig, return_info: bool = False):
    """Alternating least squares over the TT cores of the Hankel, one exact solve per core.

    ``info.history`` records the objective ``||X W - Y||_F^2`` after every
    core update (and the initial value first).
    """
    t0 = time.perf_counter()
    M = _as_system(M)
    X, Y = M.factors, M.Y
    N, l, d = X.shape
    p = M.output_dim
    rank = config.require_rank()
    cores = init_tt_cores(l, d, p, rank, config.init_std, rng_stream(config.seed, "init"))
    info = RecoveryInfo("als", converged=False)
    obj = _tt_objective(cores, X, Y)
    info.history.append(obj)
    y_sq = float(np.sum(Y**2))
    rank_deficient = False
    for sweep in range(1, config.iterations + 1):
        obj_start = obj
        right = _right_envs(cores, X)
        left = np.ones((N, 1))
        for k in range(l):
            r0, _, r1 = cores[k].shape
            # design rows indexed by (example, output), columns by core entries (a, i, b)
            Phi = np.einsum("na,ni,nbo->noaib", left, X[:, k], right[k + 1], optimize=True)
            Phi = Phi.reshape(N * p, r0 * d * r1)
            g, _, rk, _ = np.linalg.lstsq(Phi, Y.reshape(-1), rcond=None)
            rank_deficient |= rk < Phi.shape[1]
            obj = float(np.sum((Phi @ g - Y.reshape(-1)) ** 2))
            info.history.append(obj)
            Q, R = np.linalg.qr(g.reshape(r0 * d, r1))
            cores[k] = Q.reshape(r0, d, Q.shape[1])
            cores[k + 1] = np.tensordot(R, cores[k + 1], axes=(1, 0))
            left = np.einsum("na,nab->nb", left, _transfer(cores[k], X[:, k]))
        G, _, rk, _ = np.linalg.lstsq(left, Y, rcond=None)
        rank_deficient |= rk < left.shape[1]
        cores[l] = G[:, :, None]
        obj = float(np.sum((left @ G - Y) ** 2))
        info.history.append(obj)
        info.n_iter = sweep
        if (abs(obj_start - obj) <= config.conv_tol * max(obj_start, 1e-300)
                or obj <= 1e-28 * max(y_sq, 1e-300)
                or (config.target_mse is not None and obj / max(N, 1) <= config.target_mse)):
            info.converged = True
            break
    if rank_deficient:
        info.flags.append("rank-deficient core subproblem solved by pseudo-inverse")
    info.objective = obj
    info.seconds = time.perf_counter() - t0
    H = TTTensor(cores)
    return (H, info) if return_info else H


def recover_tt_sgd(M, config: RecoveryConfig, return_info: bool = False):
    """Gradient steps on each TT core in turn, over mini-batches.

    The loss is the batch mean of ``||f(x) - y||^2``; ``step_size``
    defaults to 1e-2.  Stops when the full-data loss changes by less than
    ``conv_tol`` (relative) over an epoch.
    """
    t0 = time.perf_counter()
    M = _as_system(M)
    X, Y = M.factors, M.Y
    N, l, d = X.shape
    p = M.output_dim
    rank = config.require_rank()
    gamma = 1e-2 if config.step_size is None else config.step_size
    cores = init_tt_cores(l, d, p, rank, config.init_std, rng_stream(config.seed, "init"))
    batch_rng = rng_stream(config.seed, "batching")
    B = N if config.batch_size is None else min(config.batch_size, N)
    info = RecoveryInfo("sgd", converged=False)
    loss = _tt_objective(cores, X, Y) / max(N, 1)
    info.history.append(loss)
    for epoch in range(1, config.iterations + 1):
        order = batch_rng.permutation(N) if B < N else np.arange(N)
        for start in range(0, N, B):
            idx = order[start:start + B]
            Xb, Yb = X[idx], Y[idx]
            right = _right_envs(cores, Xb)
            left = np.ones((len(idx), 1))
            for k in range(l + 1):
                # recompute the error with the cores already updated in this pass
                err = np.einsum("na,nao->no", left, _env_from(cores, Xb, k, right)) - Yb
                if k < l:
                    grad = (2.0 / len(idx)) * np.einsum("na,ni,nbo,no->aib", left, Xb[:, k], right[k + 1], err,
                                                        optimize=True)
                else:
                    grad = (2.0 / len(idx)) * np.einsum("na,no->ao", left, err)[:, :, None]
                cores[k] = cores[k] - gamma * grad
                if k < l:
                    left = np.einsum("na,nab->nb", left, _transfer(cores[k], Xb[:, k]))
        new_loss = _tt_objective(cores, X, Y) / max(N, 1)
        if not math.isfinite(new_loss) or not all(np.all(np.isfinite(c)) for c in cores):
            raise RecoveryDivergence(f"sgd: non-finite loss at epoch {epoch}; try a smaller step size (was {gamma})")
        info.history.append(new_loss)
        info.n_iter = epoch
        done = abs(loss - new_loss) <= config.conv_tol * max(loss, 1e-300)
        loss = new_loss
        if done or (config.target_mse is not None and loss <= config.target_mse):
            info.converged = True
            break
    info.objective = loss * N
    info.seconds = time.perf_counter() - t0
    H = TTTensor(cores)
    return (H, info) if return_info else H


def _env_from(cores, Xb, k, right):
    # (N, r_k, p): core k applied to input k, then the untouched right environment
    if k == len(cores) - 1:
        return right[k]
    return np.einsum("nab,nbo->nao", _transfer(cores[k], Xb[:, k]), right[k + 1], optimize=True)


RECOVERERS = {
    "least_squares": recover_least_squares,
    "nuclear_norm": recover_nuclear_norm,
    "iht": recover_iht,
    "tiht": recover_tiht,
    "als": recover_tt_als,
    "sgd": recover_tt_sgd,
}


def recover(dataset: SequenceDataset, config: RecoveryConfig, return_info: bool = False,
            max_entries: int = DENSE_ENTRY_CAP):
    """Recover one Hankel tensor from one fixed-length dataset with ``config.method``."""
    M = build_measurements(dataset, materialize=config.method not in TT_METHODS, max_entries=max_entries)
    return RECOVERERS[config.method](M, config, return_info=return_info)


def recover_hankels(datasets, config: RecoveryConfig, return_info: bool = False,
                    max_entries: int = DENSE_ENTRY_CAP):
    """Recover ``H^(L), H^(2L), H^(2L+1)`` from the three training sets."""
    out = [recover(ds, config, return_info=True, max_entries=max_entries) for ds in datasets]
    hankels = [h for h, _ in out]
    return (hankels, [i for _, i in out]) if return_info else hankels
