import numpy as np
import pytest

from acnn import model as M
from acnn.tensor import Rng, grad_check


def toy_config(arch="acnn", vocab_size=12, embedding_dim=5, channels=4, seed=0):
    first = "autocorr" if arch == "acnn" else "conv"
    return M.ModelConfig(
        arch=arch, vocab_size=vocab_size, embedding_dim=embedding_dim,
        dropout_rate=0.0, l2_weight=0.0, seed=seed,
        layers=(
            M.LayerConfig(first, ((1, 2),), channels),
            M.LayerConfig("conv", ((1, 1),), channels),
            M.LayerConfig("conv", ((0, 1),), channels),
        ))


class TestConfig:
    def test_acnn_requires_autocorr_first(self):
        with pytest.raises(M.ConfigError):
            M.ModelConfig(arch="acnn", vocab_size=8, embedding_dim=4,
                          dropout_rate=0.0, l2_weight=0.0,
                          layers=(M.LayerConfig("conv", ((1, 1),), 4),))

    def test_cnn_rejects_autocorr(self):
        with pytest.raises(M.ConfigError):
            M.ModelConfig(arch="cnn", vocab_size=8, embedding_dim=4,
                          dropout_rate=0.0, l2_weight=0.0,
                          layers=(M.LayerConfig("autocorr", ((1, 1),), 4),))

    def test_autocorr_only_at_first_layer(self):
        with pytest.raises(M.ConfigError):
            M.ModelConfig(arch="acnn", vocab_size=8, embedding_dim=4,
                          dropout_rate=0.0, l2_weight=0.0,
                          layers=(M.LayerConfig("autocorr", ((1, 1),), 4),
                                  M.LayerConfig("autocorr", ((1, 1),), 4)))

    def test_channels_divisible_by_groups(self):
        with pytest.raises(M.ConfigError):
            M.LayerConfig("conv", ((0, 1), (1, 1)), 5)

    def test_dict_round_trip(self):
        cfg = M.model_preset("acnn-table1", vocab_size=300, seed=7)
        assert M.ModelConfig.from_dict(cfg.to_dict()) == cfg

    def test_presets_all_build(self):
        for name in M.MODEL_PRESETS:
            cfg = M.model_preset(name, vocab_size=50)
            assert M.Model.build(cfg, Rng(0)) is not None


class TestBuild:
    def test_deterministic(self):
        cfg = toy_config()
        a = M.Model.build(cfg, Rng(3)).params.values_copy()
        b = M.Model.build(cfg, Rng(3)).params.values_copy()
        assert set(a) == set(b)
        for k in a:
            assert np.array_equal(a[k], b[k]), k

    def test_seed_changes_weights(self):
        cfg = toy_config()
        a = M.Model.build(cfg, Rng(1)).params["embedding"].value
        b = M.Model.build(cfg, Rng(2)).params["embedding"].value
        assert not np.array_equal(a, b)

    def test_biases_start_at_one(self):
        model = M.Model.build(toy_config(), Rng(0))
        for name, p in model.params.items():
            if name.endswith(".b"):
                assert np.all(p.value == 1.0), name

    def test_expected_tensor_names(self):
        model = M.Model.build(toy_config("acnn"), Rng(0))
        names = model.params.names()
        assert names[0] == "embedding"
        assert "layer1.group0.B" in names
        assert "layer2.group0.B" not in names
        assert names[-2:] == ["output.W", "output.b"]

    def test_param_count_closed_form(self):
        # single autocorr layer, one group: A w*m per channel, B w*w*m, bias 1
        cfg = M.ModelConfig(arch="acnn", vocab_size=10, embedding_dim=3,
                            dropout_rate=0.0, l2_weight=0.0,
                            layers=(M.LayerConfig("autocorr", ((1, 1),), 2),))
        model = M.Model.build(cfg, Rng(0))
        report = M.param_count(model.params)
        w, m, c = 3, 3, 2
        expect_layer = c * (w * m + w * w * m + 1)
        expect_out = 2 * c + 2
        assert report.embedding == 10 * 3
        assert report.network == expect_layer + expect_out
        assert report.total == report.embedding + report.network

    def test_count_table_mentions_every_tensor(self):
        model = M.Model.build(toy_config(), Rng(0))
        text = M.param_count(model.params).format()
        for name in model.params.names():
            assert name in text


class TestForward:
    def test_rows_are_distributions(self):
        model = M.Model.build(toy_config(), Rng(0))
        probs = model.forward(np.arange(8) % model.config.vocab_size)
        assert probs.shape == (8, 2)
        assert np.all(probs > 0)
        assert np.allclose(probs.sum(axis=1), 1.0)

    def test_single_token_sentence(self):
        model = M.Model.build(toy_config(), Rng(0))
        probs = model.forward([3])
        assert probs.shape == (1, 2)
        assert np.isclose(probs.sum(), 1.0)

    def test_eval_mode_bitwise_deterministic(self):
        model = M.Model.build(toy_config(), Rng(0))
        ids = [1, 4, 2, 7, 7, 2]
        assert np.array_equal(model.forward(ids), model.forward(ids))

    def test_out_of_vocab_id_rejected(self):
        model = M.Model.build(toy_config(vocab_size=8), Rng(0))
        with pytest.raises(ValueError):
            model.forward([8])
        with pytest.raises(ValueError):
            model.forward([-1])

    def test_empty_sentence_rejected(self):
        model = M.Model.build(toy_config(), Rng(0))
        with pytest.raises(ValueError):
            model.forward([])

    def test_untrained_entropy_near_uniform(self):
        # with symmetric initialization the class scores share the same bias,
        # so early predictions should sit near the 2-class entropy ceiling
        model = M.Model.build(toy_config(vocab_size=40, embedding_dim=8,
                                         channels=8), Rng(5))
        rng = Rng(0)
        ids = rng.integers(0, 40, 200)
        probs = model.forward(ids)
        ent = float(-(probs * np.log(probs)).sum(axis=1).mean())
        assert ent > 0.6 * np.log(2)

    def test_acnn_with_zero_B_matches_cnn_bitwise(self):
        acfg = toy_config("acnn", seed=9)
        ccfg = toy_config("cnn", seed=9)
        amodel = M.Model.build(acfg, Rng(9))
        cmodel = M.Model.build(ccfg, Rng(9))
        # share all non-B tensors and zero the interaction kernels
        vals = {k: v for k, v in amodel.params.values_copy().items()
                if not k.endswith(".B")}
        cmodel.params.load_values(vals)
        amodel.params["layer1.group0.B"].value[...] = 0.0
        ids = [1, 5, 3, 3, 8, 0, 2]
        assert np.array_equal(amodel.forward(ids), cmodel.forward(ids))


class TestBackward:
    @pytest.mark.parametrize("arch", ["cnn", "acnn"])
    def test_whole_model_grad_check(self, arch):
        model = M.Model.build(toy_config(arch, vocab_size=9, embedding_dim=4,
                                         channels=4, seed=2), Rng(2))
        ids = np.array([1, 3, 3, 7, 0])
        labels = np.array([0, 1, 1, 0, 0])

        def loss() -> float:
            probs = model.forward(ids)
            return float(-np.log(probs[np.arange(len(ids)), labels]).mean())

        probs, cache = model.forward_with_cache(ids)
        from acnn.layers import softmax_xent_backward
        model.params.zero_grads()
        model.backward(cache, softmax_xent_backward(probs, labels, len(ids)))
        for name, p in model.params.items():
            report = grad_check(lambda _v: loss(), p.value, p.grad)
            assert report.ok, f"{name}: max rel err {report.max_rel_error:.2e}"

    def test_repeated_ids_accumulate_embedding_grad(self):
        model = M.Model.build(toy_config(vocab_size=6), Rng(1))
        ids = np.array([2, 2, 2])
        labels = np.array([1, 1, 1])
        probs, cache = model.forward_with_cache(ids)
        from acnn.layers import softmax_xent_backward
        model.params.zero_grads()
        model.backward(cache, softmax_xent_backward(probs, labels, 3))
        grad = model.params["embedding"].grad
        touched = {i for i in range(6) if grad[i].any()}
        # zero padding contributes nothing, so only id 2 can receive gradient
        assert touched == {2}


class TestParamStore:
    def test_duplicate_name_rejected(self):
        store = M.ParamStore()
        store.add("w", np.zeros(2))
        with pytest.raises(M.ConfigError):
            store.add("w", np.zeros(2))

    def test_load_values_name_mismatch(self):
        model = M.Model.build(toy_config(), Rng(0))
        vals = model.params.values_copy()
        vals.pop("output.b")
        with pytest.raises(M.ConfigError):
            model.params.load_values(vals)

    def test_load_values_shape_mismatch(self):
        model = M.Model.build(toy_config(), Rng(0))
        vals = model.params.values_copy()
        vals["output.b"] = np.zeros(3)
        with pytest.raises(M.ConfigError):
            model.params.load_values(vals)

    def test_zero_grads(self):
        model = M.Model.build(toy_config(), Rng(0))
        model.params["output.W"].grad += 1.0
        model.params.zero_grads()
        assert not model.params["output.W"].grad.any()


class TestCheckpoint:
    def make(self, tmp_path, seed=0):
        cfg = toy_config(seed=seed)
        model = M.Model.build(cfg, Rng(seed))
        ckpt = M.Checkpoint(config=cfg, vocab_words=["<pad>", "<unk>", "a", "b"],
                            rng_algorithm="pcg64", seed=seed, step=17,
                            tensors=model.params.values_copy())
        path = tmp_path / "m.ckpt"
        M.save_checkpoint(ckpt, path)
        return cfg, model, ckpt, path

    def test_round_trip_values(self, tmp_path):
        cfg, model, ckpt, path = self.make(tmp_path)
        loaded = M.load_checkpoint(path)
        assert loaded.config == cfg
        assert loaded.vocab_words == ckpt.vocab_words
        assert loaded.rng_algorithm == "pcg64"
        assert loaded.step == 17
        for k, v in ckpt.tensors.items():
            assert np.array_equal(loaded.tensors[k], v), k

    def test_save_load_save_byte_identical(self, tmp_path):
        _, _, _, path = self.make(tmp_path)
        loaded = M.load_checkpoint(path)
        path2 = tmp_path / "again.ckpt"
        M.save_checkpoint(loaded, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_rebuilt_model_predicts_identically(self, tmp_path):
        _, model, _, path = self.make(tmp_path)
        rebuilt = M.load_checkpoint(path).build_model()
        ids = [1, 2, 3, 0, 2]
        assert np.array_equal(model.forward(ids), rebuilt.forward(ids))

    def test_bad_magic(self, tmp_path):
        _, _, _, path = self.make(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[0] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(M.CheckpointError):
            M.load_checkpoint(path)

    def test_truncation(self, tmp_path):
        _, _, _, path = self.make(tmp_path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 9])
        with pytest.raises(M.CheckpointError):
            M.load_checkpoint(path)

    def test_trailing_bytes(self, tmp_path):
        _, _, _, path = self.make(tmp_path)
        path.write_bytes(path.read_bytes() + b"x")
        with pytest.raises(M.CheckpointError):
            M.load_checkpoint(path)

    def test_config_mismatch_detected(self, tmp_path):
        _, _, _, path = self.make(tmp_path, seed=0)
        other = toy_config(arch="cnn", seed=0)
        with pytest.raises(M.CheckpointError):
            M.load_checkpoint(path, expect_config=other)
