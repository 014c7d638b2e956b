import numpy as np
import pytest

from plcnet import model
from plcnet.errors import InvalidArgumentError, NumericFailureError
from plcnet.model import ModelConfig, WeightSet, count_macs, expected_shapes, glorot_limit, init_weights

from .conftest import toy_ff_config, toy_rnn_config
from .oracles import MutableWeights, naive_model_forward, vector_rel_error

# Frozen regression vectors: toy configs, seed-123 weights, seed-7 buffer.
# Generated by this implementation and cross-checked at test time against
# the pure-Python reimplementation in oracles.py.
GOLDEN_RNN = np.array([
    -0.0012812909859465666, 0.008164282389467337, -0.012670968772883161,
    -0.007400883717013381, 0.010980493589424416, 0.010608076346511761,
    0.006829582391224099, 0.01345911146175582,
])
GOLDEN_FF = np.array([
    0.011206313438455247, -0.0014501977885442144, -0.01981352276125351,
    0.000424043363725404, 0.001405399435552044, 0.0010735279141627072,
    -0.0009846199503874497, -0.0008225085159150897,
])


def golden_config(kind):
    if kind == "rnn":
        return ModelConfig.custom(kind="rnn", buffer_len=4, fc_encoding=16, fc_embedding=8,
                                  conv4_filters=8, conv2_filters=8, bgru1_units=8, bgru2_units=8,
                                  fc_map1=16, fc_map2=16)
    return ModelConfig.custom(kind="ff", buffer_len=4, fc_encoding=16, fc_embedding=8,
                              ff_units=16, fc_map1=16, fc_map2=16)


class TestModelConfig:
    def test_table_widths(self):
        small = ModelConfig.small()
        assert (small.fc_encoding, small.fc_embedding, small.conv4_filters, small.conv2_filters,
                small.bgru1_units, small.bgru2_units, small.fc_map1, small.fc_map2,
                small.fc_decoding) == (512, 128, 128, 128, 64, 64, 512, 512, 320)
        medium = ModelConfig.medium()
        assert (medium.fc_embedding, medium.conv4_filters, medium.conv2_filters,
                medium.bgru1_units, medium.bgru2_units) == (256, 256, 256, 128, 128)
        large = ModelConfig.large()
        assert (large.fc_embedding, large.conv4_filters, large.conv2_filters,
                large.bgru1_units, large.bgru2_units) == (512, 512, 512, 256, 256)
        ff = ModelConfig.feedforward()
        assert (ff.kind, ff.fc_embedding, ff.ff_units, ff.ff_layers) == ("ff", 128, 512, 3)

    def test_decoding_pinned_to_320(self):
        with pytest.raises(InvalidArgumentError):
            ModelConfig.custom(kind="rnn", fc_decoding=160)

    def test_buffer_len_floor(self):
        with pytest.raises(InvalidArgumentError):
            ModelConfig.small(buffer_len=1)

    def test_unknown_name(self):
        with pytest.raises(InvalidArgumentError):
            ModelConfig.by_name("tiny")


class TestShapePropagation:
    @pytest.mark.parametrize("name", ["small", "medium", "large"])
    def test_intermediate_widths(self, name):
        cfg = ModelConfig.by_name(name)
        shapes = expected_shapes(cfg)
        assert shapes["enc.w"] == (160, 512)
        assert shapes["emb.w"] == (512, cfg.fc_embedding)
        assert shapes["conv1.w"] == (4, cfg.fc_embedding, cfg.conv4_filters)
        assert shapes["conv2.w"] == (2, cfg.conv4_filters, cfg.conv2_filters)
        assert shapes["bgru1.fwd.wz"] == (cfg.conv2_filters, cfg.bgru1_units)
        assert shapes["bgru2.fwd.wz"] == (2 * cfg.bgru1_units, cfg.bgru2_units)
        assert shapes["map1.w"] == (2 * cfg.bgru2_units, 512)
        assert shapes["map2.w"] == (512, 512)
        assert shapes["dec.w"] == (512, 320)

    def test_ff_flatten_width(self):
        shapes = expected_shapes(ModelConfig.feedforward())
        assert shapes["ff1.w"] == (6 * 128, 512)
        assert shapes["ff2.w"] == (512, 512)
        assert shapes["ff3.w"] == (512, 512)
        assert shapes["map1.w"] == (512, 512)


class TestMacCounts:
    @pytest.mark.parametrize(
        "name,published_millions",
        [("small", 2.96), ("medium", 7.85), ("large", 26.18)],
    )
    def test_within_published_band(self, name, published_millions):
        total = count_macs(ModelConfig.by_name(name, buffer_len=6)).total
        assert abs(total - published_millions * 1e6) <= 0.05 * published_millions * 1e6

    def test_ff_total(self):
        # Exact decomposition: 2.49 M with the 128-wide embedding feeding
        # the flatten and the mapping/decoding layers retained.
        assert count_macs(ModelConfig.feedforward(buffer_len=6)).total == 2_490_368

    def test_total_is_sum(self):
        rep = count_macs(ModelConfig.medium())
        assert rep.total == sum(rep.layers.values())

    def test_scales_with_buffer(self):
        assert count_macs(ModelConfig.small(buffer_len=8)).total > count_macs(ModelConfig.small(buffer_len=4)).total


class TestInitWeights:
    def test_deterministic(self, toy_config):
        assert init_weights(toy_config, 9) == init_weights(toy_config, 9)

    def test_seed_changes_values(self, toy_config):
        assert init_weights(toy_config, 9) != init_weights(toy_config, 10)

    def test_biases_zero(self, toy_weights):
        for name, arr in toy_weights.tensors.items():
            if arr.ndim == 1:
                assert not arr.any(), name

    def test_within_glorot_bounds(self):
        ws = init_weights(ModelConfig.small(), 4)
        for name, arr in ws.tensors.items():
            if arr.ndim == 1:
                continue
            assert np.abs(arr).max() <= glorot_limit(arr.shape), name


class TestWeightSet:
    def test_missing_tensor_rejected(self, toy_config, toy_weights):
        tensors = toy_weights.copy_tensors()
        tensors.pop("dec.b")
        with pytest.raises(InvalidArgumentError):
            WeightSet(config=toy_config, tensors=tensors)

    def test_extra_tensor_rejected(self, toy_config, toy_weights):
        tensors = toy_weights.copy_tensors()
        tensors["spare"] = np.zeros(3)
        with pytest.raises(InvalidArgumentError):
            WeightSet(config=toy_config, tensors=tensors)

    def test_wrong_shape_rejected(self, toy_config, toy_weights):
        tensors = toy_weights.copy_tensors()
        tensors["dec.b"] = np.zeros(319)
        with pytest.raises(InvalidArgumentError):
            WeightSet(config=toy_config, tensors=tensors)

    def test_non_finite_rejected(self, toy_config, toy_weights):
        tensors = toy_weights.copy_tensors()
        tensors["dec.b"][5] = np.nan
        with pytest.raises(InvalidArgumentError):
            WeightSet(config=toy_config, tensors=tensors)

    def test_tensors_immutable(self, toy_weights):
        with pytest.raises(ValueError):
            toy_weights["dec.w"][0, 0] = 1.0


class TestModelForward:
    @pytest.mark.parametrize("kind", ["rnn", "ff"])
    def test_zero_weights_give_decode_bias(self, kind, rng):
        cfg = toy_rnn_config() if kind == "rnn" else toy_ff_config()
        tensors = {name: np.zeros(shape) for name, shape in expected_shapes(cfg).items()}
        ws = WeightSet(config=cfg, tensors=tensors)
        out = model.model_forward(rng.uniform(-1, 1, (4, 160)), ws)
        assert out.shape == (320,)
        assert not out.any()

    @pytest.mark.parametrize("kind", ["rnn", "ff"])
    def test_output_length(self, kind, rng):
        cfg = toy_rnn_config() if kind == "rnn" else toy_ff_config()
        ws = init_weights(cfg, 0)
        assert model.model_forward(rng.uniform(-1, 1, (4, 160)), ws).shape == (320,)

    @pytest.mark.parametrize("kind", ["rnn", "ff"])
    def test_golden_vector_and_independent_reimplementation(self, kind):
        cfg = golden_config(kind)
        ws = init_weights(cfg, 123)
        buf = np.random.default_rng(7).uniform(-1, 1, (4, 160))
        out = model.model_forward(buf, ws)
        ref = naive_model_forward(buf, ws)
        np.testing.assert_allclose(out, ref, atol=1e-12, rtol=0)
        golden = GOLDEN_RNN if kind == "rnn" else GOLDEN_FF
        np.testing.assert_allclose(out[::40], golden, atol=1e-14, rtol=0)

    def test_invariant_to_call_history(self, toy_weights, rng):
        buf1 = rng.uniform(-1, 1, (4, 160))
        buf2 = rng.uniform(-1, 1, (4, 160))
        first = model.model_forward(buf1, toy_weights)
        model.model_forward(buf2, toy_weights)
        again = model.model_forward(buf1, toy_weights)
        np.testing.assert_array_equal(first, again)

    def test_wrong_buffer_shape(self, toy_weights):
        with pytest.raises(InvalidArgumentError):
            model.model_forward(np.zeros((5, 160)), toy_weights)
        with pytest.raises(InvalidArgumentError):
            model.model_forward(np.zeros((4, 161)), toy_weights)

    def test_non_finite_input_rejected(self, toy_weights):
        buf = np.zeros((4, 160))
        buf[0, 0] = np.inf
        with pytest.raises(InvalidArgumentError):
            model.model_forward(buf, toy_weights)

    def test_non_finite_output_flagged(self, toy_config, toy_weights):
        tensors = toy_weights.copy_tensors()
        tensors["dec.w"] *= 1e308
        tensors["map2.w"] *= 1e308
        ws = WeightSet(config=toy_config, tensors=tensors)
        with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NumericFailureError):
            model.model_forward(np.full((4, 160), 0.9), ws)


class TestModelBackward:
    def test_zero_gradient_in_zero_gradient_out(self, toy_weights):
        grads, g_buf = model.model_backward(np.ones((4, 160)) * 0.3, toy_weights, np.zeros(320))
        assert not g_buf.any()
        assert all(not g.any() for g in grads.values())

    def test_linearity(self, toy_weights, rng):
        buf = rng.uniform(-1, 1, (4, 160))
        g = rng.normal(size=320)
        grads1, gb1 = model.model_backward(buf, toy_weights, g)
        grads2, gb2 = model.model_backward(buf, toy_weights, 2.0 * g)
        np.testing.assert_allclose(gb2, 2.0 * gb1, atol=1e-12)
        for name in grads1:
            np.testing.assert_allclose(grads2[name], 2.0 * grads1[name], atol=1e-12)

    @pytest.mark.parametrize("kind", ["rnn", "ff"])
    def test_all_parameter_gradients_match_finite_differences(self, kind, rng):
        cfg = toy_rnn_config() if kind == "rnn" else toy_ff_config()
        ws = init_weights(cfg, 3)
        buf = rng.uniform(-1, 1, (cfg.buffer_len, 160))
        g_out = rng.normal(size=320)
        grads, g_buf = model.model_backward(buf, ws, g_out)

        live = MutableWeights(cfg, ws.tensors)
        eps = 1e-5
        for name, arr in live.tensors.items():
            flat = arr.ravel()
            fd = np.empty(flat.size)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                lp = float(model.model_forward(buf, live) @ g_out)
                flat[i] = orig - eps
                lm = float(model.model_forward(buf, live) @ g_out)
                flat[i] = orig
                fd[i] = (lp - lm) / (2 * eps)
            assert vector_rel_error(grads[name], fd.reshape(arr.shape)) <= 1e-4, name

        fd_in = np.empty(buf.size)
        flat = buf.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = float(model.model_forward(buf, ws) @ g_out)
            flat[i] = orig - eps
            lm = float(model.model_forward(buf, ws) @ g_out)
            flat[i] = orig
            fd_in[i] = (lp - lm) / (2 * eps)
        assert vector_rel_error(g_buf, fd_in.reshape(buf.shape)) <= 1e-4

    def test_wrong_gradient_shape(self, toy_weights):
        with pytest.raises(InvalidArgumentError):
            model.model_backward(np.zeros((4, 160)), toy_weights, np.zeros(319))
