"""Two-phase optimization: reconstruction pretraining, then joint
refinement of the encoder and the centroids against the KL objective.

Phase 2 touches only the encoder and the centroids; the decoder is frozen.
The target distribution is refreshed once per epoch from a full-batch
encode and held fixed across that epoch's mini-batches (the soft
frequencies are a full-dataset statistic, so per-batch refreshes would be
biased).
"""

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import tc
from .ctae import CtaeConfig, build_ctae, pretrain
from .errors import NonFiniteLoss
from .nn import ParamStore, adam_step


@dataclass(frozen=True)
class TrainConfig:
    pretrain_epochs: int = 10
    train_epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-3
    target_refresh: str = "every_epoch"
    seed: int = 0

    def __post_init__(self):
        if self.pretrain_epochs < 0 or self.train_epochs < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.target_refresh != "every_epoch":
            raise ValueError(f"unsupported target refresh {self.target_refresh!r}")


@dataclass
class TrainedModel:
    ctae: object
    tc: tc.TcState
    mse_trace: list = field(default_factory=list)
    kld_trace: list = field(default_factory=list)
    confidence_trace: list = field(default_factory=list)
    assignments: np.ndarray | None = None
    final_kld: float | None = None


def hard_assign(q):
    """argmax per row; ties resolve to the lowest cluster index."""
    return np.argmax(q, axis=1)


def _checksum(arr):
    return hashlib.sha256(arr.tobytes()).digest()


def train_joint(model, tc_state, ds, cfg):
    """Phase 2: per-epoch target refresh, mini-batch Adam on encoder + centroids.

    Mutates ``model`` (encoder only) and ``tc_state`` in place; returns
    (kld_trace, confidence_trace, assignments, final_kld).
    """
    x_all = ds.samples
    n = x_all.shape[0]
    rng = np.random.default_rng([cfg.seed, 0xC1])
    mu_store = ParamStore()
    mu = mu_store.add("mu", tc_state.centroids)
    tc_state.centroids = mu  # share storage so Adam updates land in the state
    kld_trace = []
    conf_trace = []
    for _ in range(cfg.train_epochs):
        z = model.encode(x_all)
        q = tc.soft_assign(z, tc_state)
        p, _ = tc.target_distribution(q)
        loss = tc.kld_loss(p, q)
        if not np.isfinite(loss):
            raise NonFiniteLoss("clustering loss diverged")
        kld_trace.append(loss)
        conf_trace.append(tc.confidence(p))
        p_tag = _checksum(p)
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            assert _checksum(p) == p_tag, "target distribution mutated mid-epoch"
            idx = perm[start : start + cfg.batch_size]
            z_seq, caches = model.encoder.forward(x_all[idx], model.encoder_params)
            zb = z_seq.reshape(idx.size, model.latent_dim)
            qb = tc.soft_assign(zb, tc_state)
            pb = p[idx]
            dz = tc.grad_z(zb, tc_state, pb, qb)
            dmu = tc.grad_mu(zb, tc_state, pb, qb)
            grads: dict = {}
            model.encoder.backward(
                dz.reshape(z_seq.shape), caches, model.encoder_params, grads
            )
            adam_step(model.encoder_params, grads, cfg.lr)
            adam_step(mu_store, {"mu": dmu}, cfg.lr)
    z = model.encode(x_all)
    q = tc.soft_assign(z, tc_state)
    p, _ = tc.target_distribution(q)
    final_kld = tc.kld_loss(p, q)
    tc_state.p_c = tc.confidence(p)
    return kld_trace, conf_trace, hard_assign(q), final_kld


def train_full(ds, k, cfg, model_config=None, init_from=None):
    """Both phases end to end on one padded, normalized dataset.

    ``init_from`` warm-starts the autoencoder from an existing model of
    identical architecture (otherwise parameters are drawn from the seed).
    With ``train_epochs == 0`` the assignments are exactly the
    hierarchical-clustering initialization labels.
    """
    if model_config is None:
        model_config = CtaeConfig(seed=cfg.seed)
    model = build_ctae(model_config, ds.length, ds.variables)
    if init_from is not None:
        model.copy_params_from(init_from)
    mse_trace = pretrain(
        model, ds, cfg.pretrain_epochs, cfg.batch_size, cfg.lr, seed=cfg.seed
    )
    z = model.encode(ds.samples)
    centroids, init_labels = tc.init_centroids(z, k)
    tc_state = tc.TcState(centroids=centroids, alpha=1.0)
    kld_trace, conf_trace, assignments, final_kld = train_joint(model, tc_state, ds, cfg)
    if cfg.train_epochs == 0:
        assignments = init_labels
    return TrainedModel(
        ctae=model,
        tc=tc_state,
        mse_trace=mse_trace,
        kld_trace=kld_trace,
        confidence_trace=conf_trace,
        assignments=assignments,
        final_kld=final_kld,
    )


def assign(trained, x):
    """Hard cluster labels for new samples under a trained model."""
    q = tc.soft_assign(trained.ctae.encode(x), trained.tc)
    return hard_assign(q)


def write_trace_csv(trained, path):
    """Training trace as ``epoch,phase,loss,confidence`` rows."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "phase", "loss", "confidence"])
        for i, loss in enumerate(trained.mse_trace, start=1):
            w.writerow([i, "mse", f"{loss:.10g}", ""])
        for i, (loss, conf) in enumerate(
            zip(trained.kld_trace, trained.confidence_trace), start=1
        ):
            w.writerow([i, "kld", f"{loss:.10g}", f"{conf:.10g}"])
