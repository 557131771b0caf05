import json

import numpy as np
import pandas as pd
import pytest

from spectral2rnn.data import (BiasAugment, SequenceDataset, addition_function, addition_reference_model,
                               gen_addition_dataset, gen_datasets, gen_random_2rnn, gen_test_set, rng_stream)
from spectral2rnn.io import (SchemaError, load_dataset, load_model, load_series_csv, load_tensor, model_from_dict,
                             save_dataset, save_model, save_tensor, serialized_size)
from spectral2rnn.models import exact_hankel
from spectral2rnn.tt import TTTensor, tt_to_dense
from spectral2rnn.validation import check_sequences, check_targets, group_by_length, split_training_sets


class TestGenerators:
    def test_streams_independent_and_reproducible(self):
        a = rng_stream(1, "data").standard_normal(3)
        np.testing.assert_array_equal(a, rng_stream(1, "data").standard_normal(3))
        assert not np.allclose(a, rng_stream(1, "init").standard_normal(3))
        assert not np.allclose(a, rng_stream(2, "data").standard_normal(3))

    def test_random_model_shapes_and_scale(self):
        R = gen_random_2rnn(30, 20, 5, param_std=0.7, seed=0)
        assert (R.n_states, R.input_dim, R.output_dim) == (30, 20, 5)
        assert np.std(R.A) == pytest.approx(0.7, rel=0.05)

    def test_bad_dims(self):
        with pytest.raises(ValueError):
            gen_random_2rnn(0, 2, 1)

    def test_datasets(self):
        R = gen_random_2rnn(3, 2, 2, seed=1)
        sets = gen_datasets(R, 2, (10, 20, 30), noise_std=0.0, seed=1)
        assert [(len(s), s.length) for s in sets] == [(10, 2), (20, 4), (30, 5)]
        np.testing.assert_allclose(sets[1].targets, R.predict(sets[1].inputs))

    def test_noise_level(self):
        R = gen_random_2rnn(3, 2, 1, seed=2)
        clean = gen_datasets(R, 1, 5000, seed=2)
        noisy = gen_datasets(R, 1, 5000, noise_std=0.1, seed=2)
        np.testing.assert_array_equal(clean[0].inputs, noisy[0].inputs)
        assert np.std(noisy[0].targets - clean[0].targets) == pytest.approx(0.1, rel=0.05)

    def test_bad_L(self):
        with pytest.raises(ValueError):
            gen_datasets(gen_random_2rnn(2, 2, 1), 0, 10)

    def test_test_set(self):
        R = gen_random_2rnn(3, 2, 2, seed=3)
        ds = gen_test_set(R, seed=3)
        assert ds.inputs.shape == (1000, 6, 2)
        assert not np.allclose(ds.inputs[:5, :2], gen_datasets(R, 1, 5, seed=3)[0].inputs)

    def test_addition(self):
        sets, model = gen_addition_dataset(50, seed=0)
        for ds in sets:
            np.testing.assert_array_equal(ds.inputs[..., 2], 1.0)
            expected = [addition_function(x[:, :2]) for x in ds.inputs]
            np.testing.assert_allclose(ds.targets[:, 0], expected, atol=1e-12)
        assert model == addition_reference_model()

    def test_addition_reference(self):
        xs = np.random.default_rng(0).standard_normal((4, 7, 2))
        out = addition_reference_model().predict(BiasAugment(2)(xs))
        np.testing.assert_allclose(out[:, 0], [addition_function(x) for x in xs], atol=1e-12)

    def test_dataset_validation(self):
        with pytest.raises(ValueError):
            SequenceDataset(np.zeros((3, 2)), np.zeros(3))
        with pytest.raises(ValueError):
            SequenceDataset(np.zeros((3, 2, 2)), np.zeros(4))
        ds = SequenceDataset(np.zeros((3, 2, 2)), np.arange(3.0))
        assert ds.targets.shape == (3, 1)
        assert len(list(ds.examples())) == 3


class TestModelIO:
    def test_round_trip_exact(self, tmp_path):
        R = gen_random_2rnn(3, 2, 2, seed=4)
        save_model(R, tmp_path / "m.json", {"seed": 4})
        assert load_model(tmp_path / "m.json") == R
        assert json.loads((tmp_path / "m.json").read_text())["metadata"] == {"seed": 4}

    def test_bad_files(self, tmp_path):
        (tmp_path / "bad.json").write_text("{not json")
        with pytest.raises(SchemaError):
            load_model(tmp_path / "bad.json")
        with pytest.raises(SchemaError):
            model_from_dict({"format": "linear2rnn", "h0": [1.0]})
        with pytest.raises(SchemaError):
            model_from_dict({"format": "other"})


class TestTensorIO:
    @pytest.mark.parametrize("suffix", [".json", ".npz"])
    def test_dense(self, tmp_path, suffix):
        H = exact_hankel(gen_random_2rnn(2, 2, 1, seed=5), 3)
        save_tensor(H, tmp_path / f"h{suffix}")
        np.testing.assert_array_equal(load_tensor(tmp_path / f"h{suffix}"), H)

    @pytest.mark.parametrize("suffix", [".json", ".npz"])
    def test_tt(self, tmp_path, suffix):
        T = exact_hankel(gen_random_2rnn(2, 2, 1, seed=5), 3, "tt")
        save_tensor(T, tmp_path / f"t{suffix}")
        back = load_tensor(tmp_path / f"t{suffix}")
        assert isinstance(back, TTTensor)
        np.testing.assert_array_equal(tt_to_dense(back), tt_to_dense(T))

    def test_size(self, tmp_path):
        T = exact_hankel(gen_random_2rnn(2, 2, 1, seed=5), 6, "tt")
        save_tensor(T, tmp_path / "t.json")
        assert serialized_size(T) == (tmp_path / "t.json").stat().st_size
        assert serialized_size(tt_to_dense(T)) > serialized_size(T)


class TestDatasetIO:
    def test_round_trip(self, tmp_path):
        ds = gen_datasets(gen_random_2rnn(2, 3, 2, seed=6), 1, 7, seed=6)[0]
        save_dataset(ds, tmp_path / "d.jsonl")
        back = load_dataset(tmp_path / "d.jsonl")
        np.testing.assert_array_equal(back.inputs, ds.inputs)
        np.testing.assert_array_equal(back.targets, ds.targets)
        assert back.metadata["seed"] == 6
        lines = (tmp_path / "d.jsonl").read_text().splitlines()
        assert len(lines) == 7 and set(json.loads(lines[0])) == {"inputs", "target"}

    def test_empty(self, tmp_path):
        empty = SequenceDataset(np.zeros((0, 2, 3)), np.zeros((0, 1)))
        save_dataset(empty, tmp_path / "e.jsonl")
        assert len(load_dataset(tmp_path / "e.jsonl")) == 0
        (tmp_path / "bare.jsonl").write_text("")
        with pytest.raises(SchemaError):
            load_dataset(tmp_path / "bare.jsonl")

    def test_malformed(self, tmp_path):
        (tmp_path / "m.jsonl").write_text('{"inputs": [[1.0]]}\n')
        with pytest.raises(SchemaError):
            load_dataset(tmp_path / "m.jsonl")
        (tmp_path / "n.jsonl").write_text('{"inputs": [[1.0]], "target": [1]}\n{"inputs": [[1.0], [2.0]], '
                                          '"target": [1]}\n')
        with pytest.raises(SchemaError):
            load_dataset(tmp_path / "n.jsonl")

    def test_series_csv(self, tmp_path):
        idx = pd.date_range("2020-01-01", periods=4, freq="5min")
        pd.DataFrame({"time": idx, "speed": [1.0, 2.0, 3.0, 4.0]}).to_csv(tmp_path / "s.csv", index=False)
        s = load_series_csv(tmp_path / "s.csv")
        assert s.name == "speed" and isinstance(s.index, pd.DatetimeIndex)
        (tmp_path / "one.csv").write_text("a\n1\n")
        with pytest.raises(SchemaError):
            load_series_csv(tmp_path / "one.csv")


class TestValidation:
    def test_sequences(self):
        assert len(check_sequences(np.zeros((4, 2, 3)))) == 4
        assert len(check_sequences([np.zeros((1, 2)), np.zeros((3, 2))], 2)) == 2
        for bad in ([], [np.zeros((0, 2))], [np.zeros((2, 2)), np.zeros((2, 3))], [np.full((1, 2), np.nan)],
                    [np.zeros(3)]):
            with pytest.raises(ValueError):
                check_sequences(bad)
        with pytest.raises(ValueError):
            check_sequences([np.zeros((1, 2))], 3)

    def test_targets(self):
        assert check_targets([1.0, 2.0], 2).shape == (2, 1)
        with pytest.raises(ValueError):
            check_targets([1.0], 2)
        with pytest.raises(ValueError):
            check_targets([np.inf], 1)

    def test_grouping(self):
        seqs = [np.zeros((2, 1)), np.ones((1, 1)), np.ones((2, 1))]
        groups = group_by_length(seqs, np.arange(3.0)[:, None])
        assert list(groups) == [1, 2]
        np.testing.assert_array_equal(groups[2][0], [0, 2])

    def test_split(self):
        seqs = [np.zeros((k, 1)) for k in (1, 2, 3, 7)]
        sets = split_training_sets(seqs, np.zeros((4, 1)), 1)
        assert [s.length for s in sets] == [1, 2, 3]
        with pytest.raises(ValueError, match="missing"):
            split_training_sets(seqs[:2], np.zeros((2, 1)), 1)
