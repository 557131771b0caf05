import numpy as np
import pytest

from spectral2rnn.exceptions import MemoryCapExceeded
from spectral2rnn.models import VvWFA, exact_hankel
from spectral2rnn.tensor import pinv
from spectral2rnn.tt import (TTTensor, tt_change_of_basis, tt_contract_batch, tt_contract_sequence, tt_entry,
                             tt_inner, tt_orthogonalize, tt_round, tt_split_factorize, tt_svd, tt_svd_with_error,
                             tt_to_dense)


def random_tt(shape, rank, rng):
    ranks = [1] + [rank] * (len(shape) - 1) + [1]
    return TTTensor([rng.standard_normal((ranks[k], d, ranks[k + 1])) for k, d in enumerate(shape)])


def random_wfa(n, k, rng, p=1, scale=0.6):
    return VvWFA(rng.standard_normal(n), scale * rng.standard_normal((n, k, n)), rng.standard_normal((p, n)),
                 tuple(range(k)))


@pytest.fixture
def rng():
    return np.random.default_rng(1)


class TestTTTensor:
    def test_boundary_checks(self):
        with pytest.raises(ValueError):
            TTTensor([np.zeros((1, 2, 2)), np.zeros((3, 2, 1))])
        with pytest.raises(ValueError):
            TTTensor([np.zeros((2, 2, 1))])

    def test_properties(self, rng):
        T = random_tt((2, 3, 4), 2, rng)
        assert T.order == 3 and T.shape == (2, 3, 4) and T.ranks == (2, 2)
        assert T.n_params == 2 * 2 + 2 * 3 * 2 + 2 * 4

    def test_norm_and_inner(self, rng):
        A, B = random_tt((2, 3, 2), 2, rng), random_tt((2, 3, 2), 3, rng)
        assert tt_inner(A, B) == pytest.approx(np.sum(tt_to_dense(A) * tt_to_dense(B)))
        assert A.norm() == pytest.approx(np.linalg.norm(tt_to_dense(A)))


class TestTTSVD:
    def test_rank_one(self, rng):
        u, v, w = rng.standard_normal(3), rng.standard_normal(4), rng.standard_normal(2)
        T = tt_svd(np.einsum("i,j,k->ijk", u, v, w))
        assert T.ranks == (1, 1)
        np.testing.assert_allclose(tt_to_dense(T), np.einsum("i,j,k->ijk", u, v, w), atol=1e-12)

    def test_wfa_hankel_ranks(self, rng):
        wfa = random_wfa(3, 2, rng)
        H = exact_hankel(wfa, 4)
        T = tt_svd(H)
        assert max(T.ranks) <= 3
        assert np.linalg.norm(tt_to_dense(T) - H) <= 1e-8 * np.linalg.norm(H)

    def test_truncation_error_is_discarded_energy(self, rng):
        X = rng.standard_normal((3, 4, 3, 2))
        T, discarded = tt_svd_with_error(X, max_rank=1)
        assert max(T.ranks) == 1
        err = np.linalg.norm(tt_to_dense(T) - X) ** 2
        # left-orthogonal sweeps make the per-step errors orthogonal
        assert err == pytest.approx(discarded, rel=1e-8)

    def test_max_rank_respected(self, rng):
        T = tt_svd(rng.standard_normal((3, 3, 3, 3)), max_rank=2)
        assert max(T.ranks) <= 2

    def test_round_trip(self, rng):
        X = rng.standard_normal((2, 3, 2, 3))
        np.testing.assert_allclose(tt_to_dense(tt_svd(X, rel_tol=0.0)), X, atol=1e-10)

    def test_zero_tensor(self):
        T = tt_svd(np.zeros((2, 3, 2)))
        np.testing.assert_array_equal(tt_to_dense(T), np.zeros((2, 3, 2)))

    def test_order_one(self, rng):
        v = rng.standard_normal(5)
        np.testing.assert_allclose(tt_to_dense(tt_svd(v)), v)


class TestEntryAndDense:
    def test_ones(self):
        T = TTTensor([np.ones((1, 2, 1)), np.ones((1, 3, 1))])
        assert tt_entry(T, (1, 2)) == 1.0
        np.testing.assert_array_equal(tt_to_dense(T), np.ones((2, 3)))

    def test_outer(self, rng):
        u, v = rng.standard_normal(3), rng.standard_normal(2)
        T = TTTensor([u[None, :, None], v[None, :, None]])
        assert tt_entry(T, (2, 1)) == pytest.approx(u[2] * v[1])

    def test_matches_dense(self, rng):
        T = random_tt((2, 3, 2, 2), 2, rng)
        D = tt_to_dense(T)
        for idx in np.ndindex(*T.shape):
            assert tt_entry(T, idx) == pytest.approx(D[idx], abs=1e-12)

    def test_bad_index(self, rng):
        T = random_tt((2, 2), 1, rng)
        with pytest.raises(IndexError):
            tt_entry(T, (0, 2))
        with pytest.raises(IndexError):
            tt_entry(T, (0,))

    def test_memory_cap(self, rng):
        T = random_tt((10,) * 5, 1, rng)
        with pytest.raises(MemoryCapExceeded):
            tt_to_dense(T, max_entries=10**4)
        with pytest.raises(MemoryError):
            tt_to_dense(T, max_entries=10**4)


class TestContraction:
    def test_one_hot_gives_fiber(self, rng):
        T = random_tt((3, 3, 2), 2, rng)
        e = np.eye(3)
        np.testing.assert_allclose(tt_contract_sequence(T, [e[2], e[0]]), tt_to_dense(T)[2, 0], atol=1e-12)

    def test_zero_input(self, rng):
        T = random_tt((3, 3, 2), 2, rng)
        np.testing.assert_array_equal(tt_contract_sequence(T, [np.zeros(3), rng.standard_normal(3)]), np.zeros(2))

    def test_matches_dense(self, rng):
        T = random_tt((2, 4, 3, 2), 3, rng)
        xs = [rng.standard_normal(d) for d in (2, 4, 3)]
        dense = np.einsum("abco,a,b,c->o", tt_to_dense(T), *xs)
        np.testing.assert_allclose(tt_contract_sequence(T, xs), dense, atol=1e-10)

    def test_full_contraction_scalar(self, rng):
        T = random_tt((2, 3), 2, rng)
        xs = [rng.standard_normal(2), rng.standard_normal(3)]
        assert float(tt_contract_sequence(T, xs)) == pytest.approx(xs[0] @ tt_to_dense(T) @ xs[1])

    def test_batch(self, rng):
        T = random_tt((2, 2, 3), 2, rng)
        X = rng.standard_normal((5, 2, 2))
        out = tt_contract_batch(T, X)
        for i in range(5):
            np.testing.assert_allclose(out[i], tt_contract_sequence(T, X[i]), atol=1e-12)

    def test_mismatch(self, rng):
        T = random_tt((2, 2, 3), 2, rng)
        with pytest.raises(ValueError):
            tt_contract_sequence(T, [np.ones(2)])
        with pytest.raises(ValueError):
            tt_contract_sequence(T, [np.ones(2), np.ones(3)])


class TestOrthogonalize:
    def test_gram_identity_and_invariance(self, rng):
        T = random_tt((3, 2, 4, 2), 3, rng)
        O = tt_orthogonalize(T, 2)
        for k in range(2):
            c = O.cores[k]
            G = c.reshape(-1, c.shape[2])
            np.testing.assert_allclose(G.T @ G, np.eye(G.shape[1]), atol=1e-10)
        c = O.cores[3]
        G = c.reshape(c.shape[0], -1)
        np.testing.assert_allclose(G @ G.T, np.eye(G.shape[0]), atol=1e-10)
        for _ in range(20):
            idx = tuple(rng.integers(0, d) for d in T.shape)
            assert tt_entry(O, idx) == pytest.approx(tt_entry(T, idx), abs=1e-10)

    def test_idempotent(self, rng):
        O = tt_orthogonalize(random_tt((2, 3, 2), 2, rng), 1)
        O2 = tt_orthogonalize(O, 1)
        for a, b in zip(O.cores, O2.cores):
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_bad_pivot(self, rng):
        with pytest.raises(ValueError):
            tt_orthogonalize(random_tt((2, 2), 1, rng), 2)


class TestRound:
    def test_no_truncation(self, rng):
        T = random_tt((2, 3, 3, 2), 2, rng)
        np.testing.assert_allclose(tt_to_dense(tt_round(T, max_rank=5)), tt_to_dense(T), atol=1e-10)

    def test_wfa_hankel(self, rng):
        H = exact_hankel(random_wfa(3, 2, rng), 4, "tt")
        np.testing.assert_allclose(tt_to_dense(tt_round(H, 3)), tt_to_dense(H), atol=1e-10)

    def test_sum_of_rank_ones(self, rng):
        a, b = rng.standard_normal(3), rng.standard_normal(3)
        a /= np.linalg.norm(a)
        b -= (b @ a) * a
        b /= np.linalg.norm(b)
        X = 3.0 * np.einsum("i,j,k->ijk", a, a, a) + 0.5 * np.einsum("i,j,k->ijk", b, b, b)
        R = tt_round(tt_svd(X), max_rank=1)
        assert np.linalg.norm(tt_to_dense(R) - X) == pytest.approx(0.5, rel=1e-8)

    def test_rounding_bounds_ranks(self, rng):
        T = random_tt((3, 3, 3, 3), 4, rng)
        assert max(tt_round(T, 2).ranks) <= 2


class TestChangeOfBasis:
    def test_identity(self, rng):
        T = random_tt((2, 3, 2), 2, rng)
        for a, b in zip(T.cores, tt_change_of_basis(T, np.eye(2)).cores):
            np.testing.assert_allclose(a, b)

    def test_scaling(self, rng):
        T = random_tt((2, 3, 2), 2, rng)
        C = tt_change_of_basis(T, 2 * np.eye(2))
        assert not np.allclose(C.cores[0], T.cores[0])
        np.testing.assert_allclose(tt_to_dense(C), tt_to_dense(T), atol=1e-12)

    def test_random(self, rng):
        T = random_tt((2, 3, 3, 2), 2, rng)
        C = tt_change_of_basis(T, rng.standard_normal((2, 2)) + 2 * np.eye(2))
        for _ in range(20):
            idx = tuple(rng.integers(0, d) for d in T.shape)
            assert tt_entry(C, idx) == pytest.approx(tt_entry(T, idx), abs=1e-8)

    def test_singular(self, rng):
        with pytest.raises(np.linalg.LinAlgError):
            tt_change_of_basis(random_tt((2, 2, 2), 2, rng), np.ones((2, 2)))

    def test_rank_mismatch(self, rng):
        with pytest.raises(ValueError):
            tt_change_of_basis(random_tt((2, 2, 2), 2, rng), np.eye(3))


class TestSplit:
    def test_two_state_wfa(self, rng):
        wfa = random_wfa(2, 2, rng)
        split = tt_split_factorize(exact_hankel(wfa, 2, "tt"), 1)
        assert split.effective_rank == 2
        P = split.prefix_matrix()
        np.testing.assert_allclose(pinv(P) @ P, np.eye(2), atol=1e-8)

    def test_factorization_matches_matricization(self, rng):
        H = exact_hankel(random_wfa(3, 2, rng, p=2), 4, "tt")
        split = tt_split_factorize(H, 2)
        dense = tt_to_dense(H).reshape(4, -1)
        np.testing.assert_allclose(split.prefix_matrix() @ split.suffix_matrix(), dense, atol=1e-10)
        np.testing.assert_allclose(split.singular_values, np.linalg.svd(dense, compute_uv=False)[:3],
                                   rtol=1e-8)

    def test_zero(self):
        Z = TTTensor([np.zeros((1, 2, 1))] * 3)
        assert tt_split_factorize(Z, 1).effective_rank == 0

    def test_recombination(self, rng):
        T = random_tt((2, 3, 2, 2), 2, rng)
        R = tt_split_factorize(T, 2).to_tt()
        for idx in np.ndindex(*T.shape):
            assert tt_entry(R, idx) == pytest.approx(tt_entry(T, idx), abs=1e-10)

    def test_orthogonality(self, rng):
        split = tt_split_factorize(random_tt((3, 3, 3, 2), 3, rng), 2)
        assert split.prefix_orthogonal and split.suffix_orthogonal

    @pytest.mark.parametrize("k", [0, 3])
    def test_bad_split(self, rng, k):
        with pytest.raises(ValueError):
            tt_split_factorize(random_tt((2, 2, 2), 1, rng), k)
