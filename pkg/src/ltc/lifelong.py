"""Lifelong protocol: a bounded pool of trained models, confidence-gap
routing, habituation-based eviction and mixture replay.

Each incoming task is scored by every pooled model: p_X is the confidence
the model reports on the task's data, v = |p_X - p_c| its gap to the
confidence stored at that model's training time. The smallest gap decides:

    v <= 0.02        refine the matched model (phase 2 on replay mixture)
    0.02 < v <= 0.05 retrain the matched model (both phases, warm start)
    v > 0.05         train a new model; evict the least-fired entry when
                     the pool is full

Thresholds (0.02, delta=0.05) and capacity (5) are configurable.
"""

import enum
import json
import os
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tc
from .ctae import load_ctae, save_ctae
from .data import TimeSeriesDataset, load_dataset, save_binary
from .errors import (
    DiskWriteFailure,
    EmptyPool,
    MissingCheckpoint,
    ShapeMismatch,
)
from .train import TrainedModel, assign, train_full, train_joint

POOL_VERSION = 1
DEFAULT_DELTA = 0.05
DEFAULT_REFINE_BAND = 0.02
DEFAULT_CAPACITY = 5
DEFAULT_REPLAY_CAP = 256


def worker_count(n_items):
    """Internal parallelism cap; LTC_THREADS overrides the CPU count."""
    env = os.environ.get("LTC_THREADS")
    limit = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(limit, n_items))


class DecisionKind(str, enum.Enum):
    REFINE = "refine"
    RETRAIN = "retrain"
    NEW_MODEL = "new_model"


@dataclass(frozen=True)
class EntryEval:
    entry_id: int
    p_x: float
    v: float


@dataclass(frozen=True)
class RoutingDecision:
    kind: DecisionKind
    entry_id: int | None
    v: float | None
    evals: tuple[EntryEval, ...] = ()


@dataclass
class PoolEntry:
    id: int
    model: TrainedModel
    h: int = 0
    replay: np.ndarray | None = None
    created_at: int = 0


class ModelPool:
    """Bounded collection of trained models plus an on-disk eviction catalog."""

    def __init__(
        self,
        root,
        capacity=DEFAULT_CAPACITY,
        delta=DEFAULT_DELTA,
        refine_band=DEFAULT_REFINE_BAND,
        replay_cap=DEFAULT_REPLAY_CAP,
    ):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if not 0.0 <= refine_band <= delta:
            raise ValueError("need 0 <= refine_band <= delta")
        self.root = Path(root)
        self.capacity = capacity
        self.delta = delta
        self.refine_band = refine_band
        self.replay_cap = replay_cap
        self.entries: list[PoolEntry] = []
        self.evicted: list[dict] = []
        self.next_id = 1
        self.task_count = 0

    def get(self, entry_id):
        for entry in self.entries:
            if entry.id == entry_id:
                return entry
        raise KeyError(f"no live entry {entry_id}")

    def fresh_id(self):
        out = self.next_id
        self.next_id += 1
        return out


def classify_v(v, delta=DEFAULT_DELTA, refine_band=DEFAULT_REFINE_BAND):
    """Total three-way split of the confidence gap."""
    if v <= refine_band:
        return DecisionKind.REFINE
    if v <= delta:
        return DecisionKind.RETRAIN
    return DecisionKind.NEW_MODEL


def _entry_confidence(entry, x):
    z = entry.model.ctae.encode(x)
    q = tc.soft_assign(z, entry.model.tc)
    p, _ = tc.target_distribution(q)
    return tc.confidence(p)


def evaluate_pool(pool, x):
    """Per-entry confidence p_X and gap v on task data, entries in parallel."""
    if not pool.entries:
        raise EmptyPool("the pool has no models yet")
    entries = list(pool.entries)
    workers = worker_count(len(entries))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            confs = list(ex.map(lambda e: _entry_confidence(e, x), entries))
    else:
        confs = [_entry_confidence(e, x) for e in entries]
    return [
        EntryEval(entry_id=e.id, p_x=c, v=abs(c - e.model.tc.p_c))
        for e, c in zip(entries, confs)
    ]


def route(pool, x, evals=None):
    """Pick the best-matching entry and classify; fires its habituation counter."""
    if evals is None:
        evals = evaluate_pool(pool, x)
    best = min(evals, key=lambda e: (e.v, e.entry_id))
    kind = classify_v(best.v, pool.delta, pool.refine_band)
    if kind is DecisionKind.NEW_MODEL:
        return RoutingDecision(kind=kind, entry_id=None, v=best.v, evals=tuple(evals))
    pool.get(best.entry_id).h += 1
    return RoutingDecision(kind=kind, entry_id=best.entry_id, v=best.v, evals=tuple(evals))


def _subsample(x, cap, rng):
    if cap <= 0:
        return None
    take = min(cap, x.shape[0])
    idx = np.sort(rng.choice(x.shape[0], size=take, replace=False))
    return x[idx].copy()


def refine_with_replay(entry, x_new, cfg, replay_cap=DEFAULT_REPLAY_CAP,
                       rng=None, use_replay=True):
    """Phase-2 refinement on the stored samples mixed with the new task.

    The mixture is an exact concatenation (no duplication); afterwards the
    replay buffer is refreshed with a uniform subsample of the mixture.
    With ``use_replay=False`` (or an empty buffer) this degrades to plain
    fine-tuning on the new data.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    model = entry.model
    if use_replay and entry.replay is not None and entry.replay.size:
        if entry.replay.shape[1:] != x_new.shape[1:]:
            raise ShapeMismatch(
                f"replay buffer {entry.replay.shape[1:]} vs task {x_new.shape[1:]}"
            )
        mixture = np.concatenate([entry.replay, x_new], axis=0)
    else:
        mixture = x_new
    mix_ds = TimeSeriesDataset(samples=mixture, name="mixture")
    kld_trace, conf_trace, assignments, final_kld = train_joint(
        model.ctae, model.tc, mix_ds, cfg
    )
    model.kld_trace = kld_trace
    model.confidence_trace = conf_trace
    model.assignments = assignments
    model.final_kld = final_kld
    entry.replay = _subsample(mixture, replay_cap, rng)
    return entry


def add_or_evict(pool, entry):
    """Append; at capacity, first push the minimum-h entry to disk.

    Habituation ties evict the oldest ``created_at`` (then the lowest id).
    """
    if len(pool.entries) >= pool.capacity:
        victim = min(pool.entries, key=lambda e: (e.h, e.created_at, e.id))
        _evict(pool, victim)
    pool.entries.append(entry)
    return pool


def _evict(pool, victim):
    target = pool.root / "evicted" / str(victim.id)
    try:
        save_entry(victim, target)
    except OSError as exc:
        raise DiskWriteFailure(f"could not persist evicted entry: {exc}") from exc
    pool.entries.remove(victim)
    record = {
        "id": victim.id,
        "p_c": victim.model.tc.p_c,
        "h": victim.h,
        "created_at": victim.created_at,
    }
    pool.evicted.append(record)
    index_path = pool.root / "evicted" / "index.json"
    try:
        with open(index_path, "w") as f:
            json.dump({"format_version": POOL_VERSION, "entries": pool.evicted}, f, indent=1)
    except OSError as exc:
        raise DiskWriteFailure(f"could not update eviction index: {exc}") from exc


def train_new_or_retrain(pool, decision, task_ds, k, cfg, model_config=None, rng=None):
    """Dispatch the two full-training routes.

    Retrain updates the matched entry in place (both phases, warm start
    from its parameters). New-model trains a fresh entry, warm-started
    from the best within-delta match when one exists, and inserts it via
    :func:`add_or_evict`.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if decision.kind is DecisionKind.RETRAIN:
        entry = pool.get(decision.entry_id)
        trained = train_full(
            task_ds, k, cfg,
            model_config=entry.model.ctae.config,
            init_from=entry.model.ctae,
        )
        entry.model = trained
        entry.replay = _subsample(task_ds.samples, pool.replay_cap, rng)
        return entry
    if decision.kind is not DecisionKind.NEW_MODEL:
        raise ValueError(f"unexpected decision {decision.kind}")
    donor = None
    in_band = [e for e in decision.evals if e.v <= pool.delta]
    if in_band:
        best = min(in_band, key=lambda e: (e.v, e.entry_id))
        donor = pool.get(best.entry_id).model.ctae
        model_config = donor.config
    trained = train_full(task_ds, k, cfg, model_config=model_config, init_from=donor)
    entry = PoolEntry(
        id=pool.fresh_id(),
        model=trained,
        h=0,
        replay=_subsample(task_ds.samples, pool.replay_cap, rng),
        created_at=pool.task_count,
    )
    add_or_evict(pool, entry)
    return entry


def lifelong_step(pool, task_ds, k, cfg, model_config=None, force=None):
    """One task through the pool: evaluate, route, adapt, cluster.

    An empty pool trains a first model unconditionally. ``force`` is an
    optional ``(DecisionKind, entry_id)`` override used by ablations and
    scenario tests; a forced selection still fires the habituation
    counter. Returns ``(labels, decision)``.
    """
    rng = np.random.default_rng([cfg.seed, pool.task_count])
    x = task_ds.samples
    if not pool.entries:
        trained = train_full(task_ds, k, cfg, model_config=model_config)
        entry = PoolEntry(
            id=pool.fresh_id(),
            model=trained,
            h=0,
            replay=_subsample(x, pool.replay_cap, rng),
            created_at=pool.task_count,
        )
        pool.entries.append(entry)
        pool.task_count += 1
        return trained.assignments, RoutingDecision(
            kind=DecisionKind.NEW_MODEL, entry_id=None, v=None
        )
    if force is None:
        decision = route(pool, x)
        use_replay = True
    else:
        kind, entry_id = force
        decision = RoutingDecision(kind=kind, entry_id=entry_id, v=None)
        if kind is not DecisionKind.NEW_MODEL:
            pool.get(entry_id).h += 1
        use_replay = False  # forced single-model runs ablate the replay too
    if decision.kind is DecisionKind.REFINE:
        entry = pool.get(decision.entry_id)
        refine_with_replay(
            entry, x, cfg, replay_cap=pool.replay_cap, rng=rng, use_replay=use_replay
        )
        labels = assign(entry.model, x)
    else:
        entry = train_new_or_retrain(
            pool, decision, task_ds, k, cfg, model_config=model_config, rng=rng
        )
        labels = entry.model.assignments
    pool.task_count += 1
    return labels, decision


# --- checkpointing ----------------------------------------------------------

def save_entry(entry, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": POOL_VERSION,
        "id": entry.id,
        "h": entry.h,
        "created_at": entry.created_at,
        "p_c": entry.model.tc.p_c,
        "alpha": entry.model.tc.alpha,
        "replay_size": 0 if entry.replay is None else int(entry.replay.shape[0]),
    }
    with open(directory / "entry.json", "w") as f:
        json.dump(meta, f, indent=1)
    save_ctae(entry.model.ctae, directory / "model")
    with open(directory / "centroids.bin", "wb") as f:
        f.write(np.ascontiguousarray(entry.model.tc.centroids, dtype="<f8").tobytes())
    with open(directory / "centroids.json", "w") as f:
        json.dump({"k": entry.model.tc.k, "dim": entry.model.tc.dim}, f)
    if entry.replay is not None and entry.replay.size:
        save_binary(TimeSeriesDataset(samples=entry.replay), directory / "replay.bin")


def load_entry(directory):
    directory = Path(directory)
    meta_path = directory / "entry.json"
    if not meta_path.is_file():
        raise MissingCheckpoint(f"no entry manifest at {meta_path}")
    with open(meta_path) as f:
        meta = json.load(f)
    model = load_ctae(directory / "model")
    with open(directory / "centroids.json") as f:
        shape = json.load(f)
    raw = (directory / "centroids.bin").read_bytes()
    centroids = (
        np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape["k"], shape["dim"])
    )
    state = tc.TcState(centroids=centroids, alpha=meta["alpha"], p_c=meta["p_c"])
    replay = None
    if meta.get("replay_size", 0):
        replay = load_dataset(directory / "replay.bin", fmt="binary").samples
    trained = TrainedModel(ctae=model, tc=state)
    return PoolEntry(
        id=meta["id"], model=trained, h=meta["h"],
        replay=replay, created_at=meta["created_at"],
    )


def save_pool(pool):
    """Persist the live entries and manifest under ``pool.root``."""
    root = pool.root
    try:
        root.mkdir(parents=True, exist_ok=True)
        for entry in pool.entries:
            save_entry(entry, root / "entries" / str(entry.id))
        manifest = {
            "format_version": POOL_VERSION,
            "capacity": pool.capacity,
            "delta": pool.delta,
            "refine_band": pool.refine_band,
            "replay_cap": pool.replay_cap,
            "next_id": pool.next_id,
            "task_count": pool.task_count,
            "entries": [
                {
                    "id": e.id,
                    "p_c": e.model.tc.p_c,
                    "h": e.h,
                    "created_at": e.created_at,
                }
                for e in pool.entries
            ],
            "evicted": pool.evicted,
        }
        with open(root / "pool.json", "w") as f:
            json.dump(manifest, f, indent=1)
    except OSError as exc:
        raise DiskWriteFailure(f"could not write pool checkpoint: {exc}") from exc


def load_pool(root):
    root = Path(root)
    manifest_path = root / "pool.json"
    if not manifest_path.is_file():
        raise MissingCheckpoint(f"no pool manifest at {manifest_path}")
    with open(manifest_path) as f:
        manifest = json.load(f)
    pool = ModelPool(
        root,
        capacity=manifest["capacity"],
        delta=manifest["delta"],
        refine_band=manifest["refine_band"],
        replay_cap=manifest["replay_cap"],
    )
    pool.next_id = manifest["next_id"]
    pool.task_count = manifest["task_count"]
    pool.evicted = list(manifest["evicted"])
    for info in manifest["entries"]:
        pool.entries.append(load_entry(root / "entries" / str(info["id"])))
    return pool


def export_pool(root, dest):
    """Copy a pool checkpoint directory wholesale."""
    root = Path(root)
    if not (root / "pool.json").is_file():
        raise MissingCheckpoint(f"no pool manifest under {root}")
    dest = Path(dest)
    try:
        shutil.copytree(root, dest, dirs_exist_ok=True)
    except OSError as exc:
        raise DiskWriteFailure(f"could not export pool: {exc}") from exc
    return dest
