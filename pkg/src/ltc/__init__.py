"""Lifelong temporal clustering of multivariate time series.

A dilated-causal convolutional + BiLSTM autoencoder learns a latent
representation that is jointly refined against a KL self-training
clustering objective; a bounded pool of trained models routes incoming
tasks by confidence gap so new concepts are learned without destroying
old ones.
"""

from .ctae import CtaeConfig, build_ctae, mse_loss, pretrain
from .data import (
    Format,
    StreamMode,
    StreamParams,
    TaskStream,
    TimeSeriesDataset,
    load_dataset,
    make_stream,
    normalize,
    pad_time,
    save_binary,
)
from .lifelong import (
    DecisionKind,
    ModelPool,
    PoolEntry,
    RoutingDecision,
    add_or_evict,
    classify_v,
    evaluate_pool,
    lifelong_step,
    load_pool,
    refine_with_replay,
    route,
    save_pool,
)
from .metrics import clustering_accuracy, kmeans, purity
from .tc import (
    TcState,
    confidence,
    grad_mu,
    grad_z,
    init_centroids,
    kld_loss,
    soft_assign,
    target_distribution,
)
from .train import TrainConfig, TrainedModel, hard_assign, train_full, train_joint

__version__ = "0.1.0"

__all__ = [
    "CtaeConfig",
    "DecisionKind",
    "Format",
    "ModelPool",
    "PoolEntry",
    "RoutingDecision",
    "StreamMode",
    "StreamParams",
    "TaskStream",
    "TcState",
    "TimeSeriesDataset",
    "TrainConfig",
    "TrainedModel",
    "add_or_evict",
    "build_ctae",
    "classify_v",
    "clustering_accuracy",
    "confidence",
    "evaluate_pool",
    "grad_mu",
    "grad_z",
    "hard_assign",
    "init_centroids",
    "kld_loss",
    "kmeans",
    "lifelong_step",
    "load_dataset",
    "load_pool",
    "make_stream",
    "mse_loss",
    "normalize",
    "pad_time",
    "pretrain",
    "purity",
    "refine_with_replay",
    "route",
    "save_binary",
    "save_pool",
    "soft_assign",
    "target_distribution",
    "train_full",
    "train_joint",
]
