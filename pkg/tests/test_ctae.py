"""Autoencoder tests: shape contracts, loss values, end-to-end gradients,
pretraining behaviour and checkpoint round trips."""

import numpy as np
import pytest

from ltc.ctae import (
    CtaeConfig,
    build_ctae,
    load_ctae,
    mse_loss,
    pretrain,
    save_ctae,
)
from ltc.data import TimeSeriesDataset
from ltc.errors import InvalidLength, ShapeMismatch
from conftest import numeric_grad, rel_err

TINY = CtaeConfig(conv_channels=4, kernel_width=3, lstm_hidden_1=3, lstm_hidden_2=3, seed=5)


def test_latent_shape_with_defaults():
    model = build_ctae(CtaeConfig(), 64, 4)
    assert model.latent_steps == 16
    assert model.latent_channels == 32
    assert model.latent_dim == 512


def test_latent_shape_padded_long_series():
    model = build_ctae(CtaeConfig(), 200, 6)
    assert (model.latent_steps, model.latent_channels) == (50, 32)


def test_length_must_divide_by_four():
    with pytest.raises(InvalidLength):
        build_ctae(CtaeConfig(), 62, 3)


def test_encode_shapes_and_determinism(rng):
    model = build_ctae(TINY, 16, 2)
    x = rng.standard_normal((6, 16, 2))
    z = model.encode(x)
    assert z.shape == (6, model.latent_dim)
    assert np.array_equal(z, model.encode(x))


def test_encode_identical_rows_give_identical_latents(rng):
    model = build_ctae(TINY, 16, 2)
    x = rng.standard_normal((3, 16, 2))
    x[2] = x[0]
    z = model.encode(x)
    assert np.array_equal(z[0], z[2])


def test_encode_is_row_equivariant(rng):
    model = build_ctae(TINY, 16, 2)
    x = rng.standard_normal((5, 16, 2))
    perm = np.array([3, 0, 4, 1, 2])
    assert np.array_equal(model.encode(x)[perm], model.encode(x[perm]))


def test_decode_round_trip_shape(rng):
    for length, variables in [(8, 2), (16, 3), (64, 4)]:
        model = build_ctae(TINY, length, variables)
        x = rng.standard_normal((2, length, variables))
        z_seq, _ = model.encode_seq(x)
        assert z_seq.shape == (2, length // 4, model.latent_channels)
        assert model.decode(z_seq).shape == x.shape


def test_decode_zero_latent_zero_biases_gives_zero():
    model = build_ctae(TINY, 8, 2)
    z = np.zeros((2, 2, model.latent_channels))
    assert np.abs(model.decode(z)).max() == 0.0


def test_encode_rejects_wrong_shape(rng):
    model = build_ctae(TINY, 16, 2)
    with pytest.raises(ShapeMismatch):
        model.encode(rng.standard_normal((2, 16, 3)))
    with pytest.raises(ShapeMismatch):
        model.decode(rng.standard_normal((2, 5, model.latent_channels)))


# --- loss -----------------------------------------------------------------------

def test_mse_zero_at_equality(rng):
    x = rng.standard_normal((3, 8, 2))
    assert mse_loss(x, x.copy()) == 0.0


def test_mse_hand_value():
    x = np.array([[[1.0], [2.0]], [[1.0], [2.0]]])[:1]
    x[0, 0, 0] = 1.0
    x[0, 1, 0] = 2.0
    assert mse_loss(x, np.zeros_like(x)) == 2.5


def test_mse_quadratic_homogeneity(rng):
    x = rng.standard_normal((2, 6, 2))
    y = rng.standard_normal((2, 6, 2))
    base = mse_loss(x, y)
    assert abs(mse_loss(3.0 * x, 3.0 * y) - 9.0 * base) < 1e-9 * max(1.0, base)


def test_mse_mask_ignores_padded_tail(rng):
    x = rng.standard_normal((2, 8, 1))
    y = x.copy()
    y[:, 6:] += 100.0  # only the padded tail differs
    assert mse_loss(x, y, valid_length=6) == 0.0


def test_mse_shape_mismatch(rng):
    with pytest.raises(ShapeMismatch):
        mse_loss(rng.standard_normal((1, 8, 1)), rng.standard_normal((1, 8, 2)))


# --- end-to-end gradients ---------------------------------------------------------

def test_full_autoencoder_gradients_match_finite_differences(rng):
    # tanh config: smooth everywhere, so central differences are well posed
    # for every coordinate (the leaky kink is exercised per layer instead)
    cfg = CtaeConfig(conv_channels=4, kernel_width=3, lstm_hidden_1=3,
                     lstm_hidden_2=3, activation="tanh", seed=11)
    model = build_ctae(cfg, 8, 2)
    x = rng.standard_normal((2, 8, 2))
    valid = 7  # exercise the mask too

    z_seq, enc_caches = model.encoder.forward(x, model.encoder_params)
    x_rec, dec_caches = model.decoder.forward(z_seq, model.decoder_params)
    grad_out = np.zeros_like(x_rec)
    m = x[:, :valid].size
    grad_out[:, :valid] = 2.0 * (x_rec[:, :valid] - x[:, :valid]) / m
    grads_dec: dict = {}
    dz = model.decoder.backward(grad_out, dec_caches, model.decoder_params, grads_dec)
    grads_enc: dict = {}
    model.encoder.backward(dz, enc_caches, model.encoder_params, grads_enc)

    def loss_with(store, name, value):
        saved = store[name].copy()
        store[name][...] = value
        z2, _ = model.encoder.forward(x, model.encoder_params)
        out = model.decode(z2)
        store[name][...] = saved
        return mse_loss(x, out, valid)

    for store, grads in ((model.encoder_params, grads_enc), (model.decoder_params, grads_dec)):
        for name in store.names():
            numeric = numeric_grad(lambda p, n=name, s=store: loss_with(s, n, p),
                                   store[name].copy())
            assert rel_err(grads[name], numeric) <= 1e-4, name


# --- pretraining -------------------------------------------------------------------

def sine_dataset(rng, n=24, length=16, variables=2):
    t = np.arange(length) / length
    x = np.empty((n, length, variables))
    for i in range(n):
        f = 1.0 + (i % 3)
        phase = rng.uniform(0, 2 * np.pi)
        for v in range(variables):
            x[i, :, v] = np.sin(2 * np.pi * f * t + phase + v)
    x += rng.normal(0, 0.05, size=x.shape)
    return TimeSeriesDataset(samples=x, name="sine")


def test_pretrain_zero_epochs_is_a_noop(rng):
    ds = sine_dataset(rng)
    model = build_ctae(TINY, 16, 2)
    reference = build_ctae(TINY, 16, 2)
    trace = pretrain(model, ds, epochs=0, batch_size=8, lr=1e-3)
    assert trace == []
    assert model.params_equal(reference)


def test_pretrain_reduces_loss_and_is_reproducible(rng):
    ds = sine_dataset(rng)

    def run():
        model = build_ctae(TINY, 16, 2)
        trace = pretrain(model, ds, epochs=8, batch_size=8, lr=3e-3, seed=0)
        return model, trace

    model_a, trace_a = run()
    model_b, trace_b = run()
    assert trace_a == trace_b
    assert model_a.params_equal(model_b)
    assert trace_a[-1] < trace_a[0]


def test_ctae_checkpoint_roundtrip(tmp_path, rng):
    model = build_ctae(TINY, 16, 2)
    ds = sine_dataset(rng)
    pretrain(model, ds, epochs=1, batch_size=8, lr=1e-3)
    save_ctae(model, tmp_path / "m")
    loaded = load_ctae(tmp_path / "m")
    assert loaded.params_equal(model)
    x = ds.samples[:3]
    assert np.array_equal(loaded.encode(x), model.encode(x))


def test_conv_blocks_remain_causal_through_pooling(rng):
    from ltc.nn import Sequential

    model = build_ctae(TINY, 32, 2)
    conv_stack = Sequential(model.encoder.layers[:6])  # conv/act/pool twice
    x = rng.standard_normal((2, 32, 2))
    y, _ = conv_stack.forward(x, model.encoder_params)
    for t in (9, 17, 26):
        bumped = x.copy()
        bumped[:, t, :] += 1.0
        y2, _ = conv_stack.forward(bumped, model.encoder_params)
        pooled_cut = t // 4
        assert np.array_equal(y2[:, :pooled_cut], y[:, :pooled_cut])
