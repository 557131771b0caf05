import numpy as np
import pytest

from spectral2rnn.data import (BiasAugment, SequenceDataset, gen_addition_dataset, gen_datasets, gen_random_2rnn,
                               gen_test_set)
from spectral2rnn.finetune import FinetuneConfig, finetune, loss_and_grad, training_loss
from spectral2rnn.models import Linear2RNN
from spectral2rnn.recovery import RecoveryConfig, recover_hankels
from spectral2rnn.spectral import SpectralConfig, spectral_learn


def random_batch(R, N, T, rng, noise=1.0):
    X = rng.standard_normal((N, T, R.input_dim))
    return SequenceDataset(X, R.predict(X) + noise * rng.standard_normal((N, R.output_dim)))


def finite_difference(R, batch, h=1e-5):
    params = [np.array(R.h0), np.array(R.A), np.array(R.omega)]
    out = []
    for k, P in enumerate(params):
        G = np.zeros_like(P)
        for idx in np.ndindex(*P.shape):
            up = [q.copy() for q in params]
            dn = [q.copy() for q in params]
            up[k][idx] += h
            dn[k][idx] -= h
            G[idx] = (loss_and_grad(Linear2RNN(*up), batch)[0] - loss_and_grad(Linear2RNN(*dn), batch)[0]) / (2 * h)
        out.append(G)
    return out


def test_config_validation():
    for kw in ({"learning_rate": 0.0}, {"epochs": 0}, {"batch_size": 0}, {"optimizer": "lbfgs"}):
        with pytest.raises(ValueError):
            FinetuneConfig(**kw)


class TestLossAndGrad:
    def test_zero_loss_zero_grad(self):
        rng = np.random.default_rng(0)
        R = gen_random_2rnn(3, 2, 2, param_std=0.5, seed=0)
        loss, grads = loss_and_grad(R, random_batch(R, 10, 3, rng, noise=0.0))
        assert loss == pytest.approx(0.0, abs=1e-28)
        for g in grads:
            np.testing.assert_allclose(g, 0.0, atol=1e-14)

    @pytest.mark.parametrize("seed", range(5))
    def test_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        R = gen_random_2rnn(2, 2, 1, param_std=0.8, seed=seed)
        batch = random_batch(R, 5, 3, rng)
        _, grads = loss_and_grad(R, batch)
        for g, fd in zip(grads, finite_difference(R, batch)):
            assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(fd), 1e-12)

    def test_closed_form_omega(self):
        rng = np.random.default_rng(1)
        R = gen_random_2rnn(2, 2, 1, param_std=0.8, seed=1)
        x = rng.standard_normal((1, 1, 2))
        y = np.array([[0.3]])
        h1 = np.einsum("a,b,abc->c", R.h0, x[0, 0], R.A)
        expected = 2 * np.outer(R.omega @ h1 - y[0], h1)
        _, (_, _, g_omega) = loss_and_grad(R, SequenceDataset(x, y))
        np.testing.assert_allclose(g_omega, expected, atol=1e-12)

    def test_empty_batch(self):
        R = gen_random_2rnn(2, 2, 1, seed=0)
        loss, grads = loss_and_grad(R, SequenceDataset(np.zeros((0, 2, 2)), np.zeros((0, 1))))
        assert loss == 0.0 and not any(g.any() for g in grads)


class TestFinetune:
    def test_tiny_learning_rate_keeps_parameters(self):
        rng = np.random.default_rng(2)
        R = gen_random_2rnn(2, 2, 1, param_std=0.8, seed=2)
        data = random_batch(R, 20, 2, rng)
        out = finetune(R, data, FinetuneConfig(learning_rate=1e-300, epochs=2, optimizer="plain_sgd"))
        np.testing.assert_array_equal(out.A, R.A)

    @pytest.mark.parametrize("optimizer", ["plain_sgd", "adaptive_moments"])
    def test_never_worse(self, optimizer):
        rng = np.random.default_rng(3)
        R = gen_random_2rnn(2, 2, 1, param_std=0.8, seed=3)
        data = [random_batch(R, 30, T, rng) for T in (1, 2, 3)]
        start = gen_random_2rnn(2, 2, 1, param_std=0.8, seed=4)
        out, info = finetune(start, data, FinetuneConfig(learning_rate=1e-2, epochs=20, optimizer=optimizer),
                             return_info=True)
        assert training_loss(out, data) <= training_loss(start, data)
        assert info.best_loss <= info.initial_loss
        assert len(info.history) == 20

    def test_divergence_reverts(self):
        rng = np.random.default_rng(4)
        R = gen_random_2rnn(2, 2, 1, param_std=0.8, seed=4)
        data = random_batch(R, 30, 4, rng)
        with np.errstate(all="ignore"):
            out, info = finetune(R, data, FinetuneConfig(learning_rate=1e6, epochs=50, optimizer="plain_sgd"),
                                 return_info=True)
        assert info.flags
        assert training_loss(out, data) <= info.initial_loss

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        R = gen_random_2rnn(2, 2, 1, param_std=0.8, seed=5)
        data = random_batch(R, 40, 2, rng)
        start = gen_random_2rnn(2, 2, 1, param_std=0.8, seed=6)
        cfg = FinetuneConfig(learning_rate=1e-2, epochs=5, batch_size=7, seed=9)
        assert finetune(start, data, cfg) == finetune(start, data, cfg)

    def test_exact_model_not_damaged(self):
        R = gen_random_2rnn(5, 3, 2, param_std=np.sqrt(0.2), seed=6)
        sets = gen_datasets(R, 2, 300, seed=6)
        learned = spectral_learn(*recover_hankels(sets, RecoveryConfig()), SpectralConfig(rank=5))
        tuned = finetune(learned, sets, FinetuneConfig(epochs=20))
        test = gen_test_set(R, seed=6)
        assert np.mean((tuned.predict(test.inputs) - test.targets) ** 2) <= 1e-8

    def test_helps_noisy_addition(self):
        before, after = [], []
        for seed in range(5):
            sets, model = gen_addition_dataset(100, noise_std=0.1, seed=seed)
            learned = spectral_learn(*recover_hankels(sets, RecoveryConfig()), SpectralConfig(rank=2))
            tuned = finetune(learned, sets, FinetuneConfig(epochs=50, seed=seed))
            test = gen_test_set(model, seed=seed, input_fn=BiasAugment(2))
            before.append(np.mean((learned.predict(test.inputs) - test.targets) ** 2))
            after.append(np.mean((tuned.predict(test.inputs) - test.targets) ** 2))
        assert np.median(after) <= np.median(before)

