"""Spectral learning of linear second-order RNNs with tensor-train Hankel tensors."""
from .data import SequenceDataset, gen_addition_dataset, gen_datasets, gen_random_2rnn, gen_test_set
from .estimator import Spectral2RNNRegressor
from .exceptions import MemoryCapExceeded, NumericalFailure, RecoveryDivergence
from .finetune import FinetuneConfig, finetune, loss_and_grad
from .harness import forecast_pipeline, learn_2rnn, metrics, zero_fallback_guard
from .models import Linear2RNN, VvWFA, exact_hankel, rnn_to_wfa, wfa_evaluate, wfa_to_2rnn
from .recovery import RecoveryConfig, build_measurements, recover, recover_hankels
from .spectral import SpectralConfig, spectral_learn
from .tt import TTTensor, tt_svd, tt_to_dense

__version__ = "0.1.0"

__all__ = [
    "FinetuneConfig", "Linear2RNN", "MemoryCapExceeded", "NumericalFailure", "RecoveryConfig",
    "RecoveryDivergence", "SequenceDataset", "Spectral2RNNRegressor", "SpectralConfig", "TTTensor", "VvWFA",
    "build_measurements", "exact_hankel", "finetune", "forecast_pipeline", "gen_addition_dataset",
    "gen_datasets", "gen_random_2rnn", "gen_test_set", "learn_2rnn", "loss_and_grad", "metrics", "recover",
    "recover_hankels", "rnn_to_wfa", "spectral_learn", "tt_svd", "tt_to_dense", "wfa_evaluate", "wfa_to_2rnn",
    "zero_fallback_guard",
]
