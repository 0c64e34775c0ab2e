"""Full model: embedding, layers, forward contract, checkpoints."""

import numpy as np
import pytest

from adformer import tensor as T
from adformer.errors import CompatibilityError, ConfigError, ShapeError
from adformer.model import (
    ModelConfig,
    embed,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
    sinusoidal_table,
)
from adformer.rng import XorShift64Star
from conftest import fd_grad, max_rel_err, tiny_model_config


class TestConfig:
    def test_defaults_follow_reference_protocol(self):
        cfg = ModelConfig()
        assert (cfg.window, cfg.d_model, cfg.layers, cfg.heads) == (100, 512, 3, 8)
        assert cfg.d_ff == 4 * cfg.d_model
        assert cfg.lambda_ == 3.0

    def test_validation(self):
        with pytest.raises(ConfigError):
            ModelConfig(d_model=10, heads=3).validate()
        with pytest.raises(ConfigError):
            ModelConfig(window=0).validate()

    def test_json_roundtrip(self):
        cfg = tiny_model_config(prior_kind="power_law")
        again = ModelConfig.from_json(cfg.to_json())
        assert again == cfg


class TestEmbedding:
    def test_zero_input_gives_positional_table(self, tiny_setup):
        cfg, params, _ = tiny_setup
        out = embed(T.Tensor(np.zeros((8, 2))), params, cfg)
        np.testing.assert_allclose(out.data, params.pos_table, atol=1e-12)

    def test_position_zero_channels(self):
        table = sinusoidal_table(4, 6)
        np.testing.assert_allclose(table[0, 0::2], 0.0, atol=1e-12)  # sin(0)
        np.testing.assert_allclose(table[0, 1::2], 1.0, atol=1e-12)  # cos(0)

    def test_wrong_window_length(self, tiny_setup):
        cfg, params, _ = tiny_setup
        with pytest.raises(ShapeError):
            embed(T.Tensor(np.zeros((5, 2))), params, cfg)

    def test_deterministic(self, tiny_setup):
        cfg, params, x = tiny_setup
        a = embed(T.Tensor(x), params, cfg).data
        b = embed(T.Tensor(x), params, cfg).data
        np.testing.assert_array_equal(a, b)


class TestLayer:
    def test_layernorm_rows_standardised(self):
        # mean 0 / var 1 per row before gain & bias
        rng = XorShift64Star(0)
        x = rng.normal((6, 8)) * 3 + 1
        out = T.layer_norm(
            T.Tensor(x), T.Tensor(np.ones(8)), T.Tensor(np.zeros(8)), 1e-5
        ).data
        np.testing.assert_allclose(out.mean(axis=1), 0.0, atol=1e-6)
        np.testing.assert_allclose(out.var(axis=1), 1.0, atol=1e-4)

    def test_zeroed_ff_second_matrix_bias_only(self, tiny_setup):
        from adformer.attention import distance_matrix
        from adformer.model import layer_forward

        cfg, params, x = tiny_setup
        lp = params.layers[0]
        lp.ff_w2.data[...] = 0.0
        lp.ff_b2.data[...] = 0.0
        h = embed(T.Tensor(x), params, cfg)
        x_out, attn = layer_forward(h, lp, cfg, distance_matrix(8))
        z = T.layer_norm(T.add(h, attn.z_hat), lp.ln1_gain, lp.ln1_bias,
                         cfg.layernorm_eps)
        expected = T.layer_norm(z, lp.ln2_gain, lp.ln2_bias, cfg.layernorm_eps)
        np.testing.assert_allclose(x_out.data, expected.data, atol=1e-12)


class TestForward:
    def test_shape_closure(self, tiny_setup):
        cfg, params, x = tiny_setup
        fr = forward(x, params, cfg)
        assert fr.x_hat.shape == x.shape
        assert len(fr.layers) == cfg.layers
        for out in fr.layers:
            assert len(out.prior) == cfg.heads
            assert len(out.series) == cfg.heads
            for m in (*out.prior, *out.series):
                assert m.shape == (cfg.window, cfg.window)
                np.testing.assert_allclose(m.data.sum(axis=1), 1.0, atol=1e-6)

    def test_determinism(self, tiny_setup):
        cfg, params, x = tiny_setup
        a = forward(x, params, cfg).x_hat.data
        b = forward(x, params, cfg).x_hat.data
        np.testing.assert_array_equal(a, b)

    def test_channel_permutation_equivariance(self):
        cfg = tiny_model_config(input_dim=3)
        params = init_params(cfg, seed=4)
        x = XorShift64Star(6).normal((8, 3))
        base = forward(x, params, cfg).x_hat.data
        perm = [2, 0, 1]
        params.embed_w.data[...] = params.embed_w.data[perm, :]
        params.head_w.data[...] = params.head_w.data[:, perm]
        params.head_b.data[...] = params.head_b.data[perm]
        permuted = forward(x[:, perm], params, cfg).x_hat.data
        np.testing.assert_allclose(permuted, base[:, perm], atol=1e-10)

    @pytest.mark.parametrize("seed", range(3))
    def test_end_to_end_gradient_check(self, seed):
        from adformer.discrepancy import DiscrepancyConfig
        from adformer.training import discrepancy_mean, reconstruction_loss

        cfg = tiny_model_config(window=8, input_dim=1, d_model=8, heads=2, layers=1)
        params = init_params(cfg, seed=seed)
        x = XorShift64Star(seed + 50).normal((8, 1))
        dcfg = DiscrepancyConfig()

        def loss_value():
            with T.no_grad():
                fr = forward(x, params, cfg)
                return (
                    reconstruction_loss(fr, T.Tensor(x)).item()
                    + 3.0 * discrepancy_mean(fr, dcfg).item()
                )

        fr = forward(x, params, cfg)
        loss = reconstruction_loss(fr, T.Tensor(x)) + T.scale(
            discrepancy_mean(fr, dcfg), 3.0
        )
        T.backward(loss)
        for name, t in params.named():
            numeric = fd_grad(loss_value, t.data)
            assert max_rel_err(t.grad, numeric) < 1e-4, name


class TestCheckpoint:
    def test_roundtrip_exact(self, tmp_path, tiny_setup):
        cfg, params, x = tiny_setup
        before = forward(x, params, cfg).x_hat.data
        path = str(tmp_path / "ckpt.npz")
        save_checkpoint(path, cfg, params)
        cfg2, params2 = load_checkpoint(path)
        assert cfg2 == cfg
        for (_, a), (_, b) in zip(params.named(), params2.named()):
            np.testing.assert_array_equal(a.data, b.data)
        after = forward(x, params2, cfg2).x_hat.data
        np.testing.assert_array_equal(before, after)

    def test_missing_parameter_detected(self, tmp_path, tiny_setup):
        cfg, params, _ = tiny_setup
        path = str(tmp_path / "ckpt.npz")
        save_checkpoint(path, cfg, params)
        import numpy as np_mod

        with np_mod.load(path) as npz:
            arrays = {k: npz[k] for k in npz.files if "w_q" not in k}
        np_mod.savez(path, **arrays)
        with pytest.raises(CompatibilityError):
            load_checkpoint(path)


def test_dropout_config_exercised():
    cfg = tiny_model_config(dropout=0.5)
    params = init_params(cfg, seed=3)
    x = XorShift64Star(9).normal((8, 2))
    rng_a = XorShift64Star(1)
    rng_b = XorShift64Star(1)
    a = forward(x, params, cfg, drop_rng=rng_a).x_hat.data
    b = forward(x, params, cfg, drop_rng=rng_b).x_hat.data
    np.testing.assert_array_equal(a, b)  # same dropout stream, same output
    c = forward(x, params, cfg, drop_rng=XorShift64Star(2)).x_hat.data
    assert not np.array_equal(a, c)
