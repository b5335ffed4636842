"""Convolutional-recurrent autoencoder for multivariate series.

Encoder: two dilated causal conv blocks (dilation 1 then 2, each followed
by activation and pool-2), then two BiLSTM layers each gated by additive
attention. After the two pools the latent sequence has L/4 steps and
2 * lstm_hidden_2 channels; flattening it gives the clustering
representation Z. Decoder: time-distributed dense, two upsample /
transposed-conv stages back to V channels.
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidLength, NonFiniteLoss, ShapeMismatch
from .nn import (
    Activation,
    AdditiveAttention,
    BiLSTM,
    CausalConv1D,
    MaxPool1D,
    ParamStore,
    Sequential,
    TimeDistributedDense,
    TransposedConv1D,
    Upsample1D,
    adam_step,
    load_params,
    save_params,
)

POOL_STAGES = 2  # fixed by the architecture: latent time length is L / 4


@dataclass(frozen=True)
class CtaeConfig:
    conv_channels: int = 64
    kernel_width: int = 3
    lstm_hidden_1: int = 64
    lstm_hidden_2: int = 16
    pool_size: int = 2
    activation: str = "leaky_relu"
    seed: int = 0

    def __post_init__(self):
        if self.pool_size != 2:
            raise ValueError("pool_size is fixed at 2")
        for name in ("conv_channels", "kernel_width", "lstm_hidden_1", "lstm_hidden_2"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


class CtaeModel:
    """Encoder/decoder pair with separate parameter stores."""

    def __init__(self, config, length, variables):
        if length % 4 != 0:
            raise InvalidLength(f"series length {length} not divisible by 4")
        self.config = config
        self.length = length
        self.variables = variables
        c = config.conv_channels
        k = config.kernel_width
        h1 = config.lstm_hidden_1
        h2 = config.lstm_hidden_2
        act = config.activation
        self.encoder = Sequential(
            [
                CausalConv1D("conv1", variables, c, k, dilation=1),
                Activation(act),
                MaxPool1D(config.pool_size),
                CausalConv1D("conv2", c, c, k, dilation=2),
                Activation(act),
                MaxPool1D(config.pool_size),
                BiLSTM("lstm1", c, h1),
                AdditiveAttention("attn1", 2 * h1),
                BiLSTM("lstm2", 2 * h1, h2),
                AdditiveAttention("attn2", 2 * h2),
            ]
        )
        self.decoder = Sequential(
            [
                TimeDistributedDense("dense", 2 * h2, c),
                Upsample1D(config.pool_size),
                TransposedConv1D("tconv1", c, c, k),
                Upsample1D(config.pool_size),
                TransposedConv1D("tconv2", c, variables, k),
            ]
        )
        self.encoder_params = ParamStore()
        self.decoder_params = ParamStore()
        rng = np.random.default_rng(config.seed)
        self.encoder.init(self.encoder_params, rng)
        self.decoder.init(self.decoder_params, rng)

    @property
    def latent_steps(self):
        return self.length // 4

    @property
    def latent_channels(self):
        return 2 * self.config.lstm_hidden_2

    @property
    def latent_dim(self):
        return self.latent_steps * self.latent_channels

    def _check_input(self, x):
        if x.ndim != 3 or x.shape[1] != self.length or x.shape[2] != self.variables:
            raise ShapeMismatch(
                f"expected (B, {self.length}, {self.variables}), got {tuple(x.shape)}"
            )

    def encode_seq(self, x):
        """Latent sequence (B, L/4, 2*h2) plus the caches needed for backprop."""
        self._check_input(x)
        return self.encoder.forward(x, self.encoder_params)

    def encode(self, x):
        """Flattened latent representation Z, shape (B, latent_dim)."""
        z_seq, _ = self.encode_seq(x)
        return z_seq.reshape(x.shape[0], self.latent_dim)

    def decode(self, z_seq):
        """Reconstruction (B, L, V) from a latent sequence."""
        if z_seq.ndim != 3 or z_seq.shape[1:] != (self.latent_steps, self.latent_channels):
            raise ShapeMismatch(
                f"expected (B, {self.latent_steps}, {self.latent_channels}), "
                f"got {tuple(z_seq.shape)}"
            )
        y, _ = self.decoder.forward(z_seq, self.decoder_params)
        return y

    def reconstruct(self, x):
        z_seq, _ = self.encode_seq(x)
        return self.decode(z_seq)

    def copy_params_from(self, other):
        self.encoder_params.copy_values_from(other.encoder_params)
        self.decoder_params.copy_values_from(other.decoder_params)

    def params_equal(self, other):
        return self.encoder_params.bytes_equal(other.encoder_params) and (
            self.decoder_params.bytes_equal(other.decoder_params)
        )


def build_ctae(config, length, variables):
    """Construct a model for padded length L (divisible by 4) and V variables."""
    return CtaeModel(config, length, variables)


def mse_loss(x, x_rec, valid_length=None):
    """Mean squared reconstruction error per element over unmasked steps."""
    if x.shape != x_rec.shape:
        raise ShapeMismatch(f"{x.shape} vs {x_rec.shape}")
    if valid_length is None:
        valid_length = x.shape[1]
    diff = x[:, :valid_length] - x_rec[:, :valid_length]
    return float(np.mean(diff * diff))


def _mse_grad(x, x_rec, valid_length):
    """Gradient of :func:`mse_loss` with respect to the reconstruction."""
    grad = np.zeros_like(x_rec)
    m = x[:, :valid_length].size
    grad[:, :valid_length] = 2.0 * (x_rec[:, :valid_length] - x[:, :valid_length]) / m
    return grad


def pretrain(model, ds, epochs, batch_size, lr, seed=None):
    """Adam on the reconstruction loss; returns the per-epoch mean loss trace."""
    if seed is None:
        seed = model.config.seed
    x_all = ds.samples
    n = x_all.shape[0]
    valid = ds.orig_length
    rng = np.random.default_rng([seed, 0xAE])
    trace = []
    for _ in range(epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            x = x_all[idx]
            z_seq, enc_caches = model.encoder.forward(x, model.encoder_params)
            x_rec, dec_caches = model.decoder.forward(z_seq, model.decoder_params)
            loss = mse_loss(x, x_rec, valid)
            if not np.isfinite(loss):
                raise NonFiniteLoss("reconstruction loss diverged")
            total += loss * idx.size
            grads_dec: dict = {}
            dz = model.decoder.backward(
                _mse_grad(x, x_rec, valid), dec_caches, model.decoder_params, grads_dec
            )
            grads_enc: dict = {}
            model.encoder.backward(dz, enc_caches, model.encoder_params, grads_enc)
            adam_step(model.decoder_params, grads_dec, lr)
            adam_step(model.encoder_params, grads_enc, lr)
        trace.append(total / n)
    return trace


# --- checkpointing ----------------------------------------------------------

def save_ctae(model, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "config": asdict(model.config),
        "length": model.length,
        "variables": model.variables,
    }
    with open(directory / "ctae.json", "w") as f:
        json.dump(meta, f, indent=1)
    save_params(model.encoder_params, directory / "encoder", model.encoder.describe())
    save_params(model.decoder_params, directory / "decoder", model.decoder.describe())


def load_ctae(directory):
    directory = Path(directory)
    with open(directory / "ctae.json") as f:
        meta = json.load(f)
    model = CtaeModel(CtaeConfig(**meta["config"]), meta["length"], meta["variables"])
    enc, _ = load_params(directory / "encoder")
    dec, _ = load_params(directory / "decoder")
    model.encoder_params.copy_values_from(enc)
    model.decoder_params.copy_values_from(dec)
    return model
