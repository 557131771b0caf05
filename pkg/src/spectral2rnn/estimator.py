"""Scikit-learn estimator wrapping the spectral learning pipeline."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .finetune import FinetuneConfig
from .harness import learn_2rnn
from .recovery import RecoveryConfig
from .spectral import AUTO_RANK_TOL, SpectralConfig
from .validation import check_sequences, check_targets, group_by_length, split_training_sets


class Spectral2RNNRegressor(RegressorMixin, BaseEstimator):
    """Learn a linear 2-RNN from sequences of lengths L, 2L and 2L+1.

    ``X`` is a list of ``(length, d)`` arrays (or one ``(N, length, d)``
    array); ``y`` holds the output after the last step of each sequence.
    ``n_states=None`` picks the rank from the Hankel spectrum with
    ``rank_tol``.  Iterative recovery methods need ``n_states``.

    Attributes
    ----------
    model_ : Linear2RNN
    rank_ : int
        Number of states of the learned model (0 after a zero fallback).
    singular_values_ : ndarray
        Spectrum of the prefix/suffix matricization of ``H^(2L)``.
    fallback_ : bool
    n_features_in_ : int
    """

    def __init__(self, n_states=None, L=2, recovery="least_squares", rank_tol=AUTO_RANK_TOL,
                 step_size=None, max_iter=None, tol=1e-8, epsilon=0.0, batch_size=None,
                 finetune=False, learning_rate=1e-4, finetune_epochs=200, zero_fallback=True,
                 random_state=0):
        self.n_states = n_states
        self.L = L
        self.recovery = recovery
        self.rank_tol = rank_tol
        self.step_size = step_size
        self.max_iter = max_iter
        self.tol = tol
        self.epsilon = epsilon
        self.batch_size = batch_size
        self.finetune = finetune
        self.learning_rate = learning_rate
        self.finetune_epochs = finetune_epochs
        self.zero_fallback = zero_fallback
        self.random_state = random_state

    def fit(self, X, y):
        seqs = check_sequences(X)
        y = check_targets(y, len(seqs))
        datasets = split_training_sets(seqs, y, self.L)
        seed = 0 if self.random_state is None else int(self.random_state)
        recovery = RecoveryConfig(self.recovery, rank=self.n_states, step_size=self.step_size,
                                  epsilon=self.epsilon, max_iters=self.max_iter, conv_tol=self.tol,
                                  batch_size=self.batch_size, seed=seed)
        fmt = "tt" if recovery.method in ("als", "sgd") else "dense"
        spectral = SpectralConfig(rank=self.n_states, rank_tol=self.rank_tol, L=self.L, format=fmt)
        ft = (FinetuneConfig(learning_rate=self.learning_rate, epochs=self.finetune_epochs, seed=seed)
              if self.finetune else None)
        self.model_, info = learn_2rnn(datasets, recovery, spectral, ft, self.zero_fallback)
        self.rank_ = info.rank
        self.singular_values_ = np.asarray(info.singular_values)
        self.fallback_ = info.fallback
        self.n_features_in_ = seqs[0].shape[1]
        self.n_outputs_ = y.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        seqs = check_sequences(X, self.n_features_in_)
        out = np.empty((len(seqs), self.n_outputs_))
        for idx, stacked in group_by_length(seqs).values():
            out[idx] = self.model_.predict(stacked)
        return out[:, 0] if self.n_outputs_ == 1 else out
