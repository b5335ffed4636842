"""Request/response models for the HTTP service."""

from typing import Literal, Optional, Union

from pydantic import BaseModel, Field


class ModelSettings(BaseModel):
    conv_channels: int = Field(default=64, ge=1)
    kernel_width: int = Field(default=3, ge=1)
    lstm_hidden_1: int = Field(default=64, ge=1)
    lstm_hidden_2: int = Field(default=16, ge=1)
    activation: Literal["leaky_relu", "tanh"] = "leaky_relu"


class TrainSettings(BaseModel):
    pretrain_epochs: int = Field(default=10, ge=0)
    train_epochs: int = Field(default=100, ge=0)
    batch_size: int = Field(default=64, ge=1)
    lr: float = Field(default=1e-3, gt=0)


class ClusterRequest(BaseModel):
    data: str
    format: Literal["long_csv", "binary"] = "long_csv"
    labels: Optional[str] = None
    k: int = Field(ge=1)
    seed: int = 0
    repeats: int = Field(default=1, ge=1)
    out: str
    normalize: bool = True
    train: TrainSettings = TrainSettings()
    model: ModelSettings = ModelSettings()


class BaselineRequest(BaseModel):
    data: str
    format: Literal["long_csv", "binary"] = "long_csv"
    labels: Optional[str] = None
    k: int = Field(ge=1)
    seed: int = 0
    repeats: int = Field(default=1, ge=1)
    out: str
    normalize: bool = True


class ResultRowModel(BaseModel):
    dataset: str
    n: int
    l: int
    v: int
    c: Optional[int]
    k: int
    seed: str
    accuracy: Optional[float]
    purity: Optional[float]
    mse_final: Optional[float]
    kld_final: Optional[float]
    wall_seconds: Optional[float]
    algorithm: str


class ClusterResponse(BaseModel):
    rows: list[ResultRowModel]
    results_csv: str
    trace_csvs: list[str] = []


class LifelongSettings(BaseModel):
    mode: Literal["iid", "sequential", "continuous_drift"] = "sequential"
    k: Union[int, list[int]] = Field(default=2)
    class_groups: Optional[list[list[int]]] = None
    num_batches: Optional[int] = None
    batch_size: Optional[int] = None
    max_fraction: float = Field(default=0.5, ge=0.0, le=1.0)
    new_class: Optional[int] = None
    delta: float = Field(default=0.05, gt=0)
    refine_band: float = Field(default=0.02, ge=0)
    capacity: int = Field(default=5, ge=1)
    replay_cap: int = Field(default=256, ge=0)
    ablate_single_model: bool = False


class LifelongRequest(BaseModel):
    data: str
    format: Literal["long_csv", "binary"] = "long_csv"
    labels: Optional[str] = None
    seed: int = 0
    out: str
    normalize: bool = True
    train: TrainSettings = TrainSettings()
    model: ModelSettings = ModelSettings()
    lifelong: LifelongSettings = LifelongSettings()


class LifelongStepModel(BaseModel):
    step: int
    task_id: int
    decision: str
    v: Optional[float]
    pool_size: int
    acc_task: Optional[float]
    task_accuracies: list[Optional[float]]


class LifelongResponse(BaseModel):
    rows: list[LifelongStepModel]
    lifelong_csv: str
    pool_dir: str


class PoolEntryInfo(BaseModel):
    id: int
    p_c: float
    h: int
    created_at: int
    evicted: bool


class PoolListResponse(BaseModel):
    checkpoint: str
    entries: list[PoolEntryInfo]


class PoolExportRequest(BaseModel):
    checkpoint: str
    dest: str


class PoolExportResponse(BaseModel):
    checkpoint: str
    dest: str


class ErrorBody(BaseModel):
    detail: str
    kind: Literal["config", "numeric", "internal"]
