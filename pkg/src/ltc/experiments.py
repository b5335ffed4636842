"""Experiment orchestration behind the service endpoints.

Each runner loads and preprocesses a dataset, drives the core package and
writes CSV result files into the request's output directory. Row values
are also returned in memory so callers (service, tests) can check them
without reparsing the files.
"""

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .ctae import CtaeConfig
from .data import (
    Format,
    StreamMode,
    StreamParams,
    load_dataset,
    make_stream,
    normalize,
    pad_time,
)
from .errors import ConfigError, MissingCheckpoint, MissingLabels
from .lifelong import (
    DecisionKind,
    ModelPool,
    evaluate_pool,
    lifelong_step,
    load_entry,
    load_pool,
    save_pool,
)
from .train import TrainConfig, assign, train_full, write_trace_csv

PAD_MULTIPLE = 4

RESULT_COLUMNS = [
    "dataset", "n", "l", "v", "c", "k", "seed",
    "accuracy", "purity", "mse_final", "kld_final", "wall_seconds", "algorithm",
]


def _fmt(value, spec="{:.6f}"):
    return "" if value is None else spec.format(value)


@dataclass
class ResultRow:
    dataset: str
    n: int
    l: int
    v: int
    c: int | None
    k: int
    seed: str
    accuracy: float | None
    purity: float | None
    mse_final: float | None
    kld_final: float | None
    wall_seconds: float
    algorithm: str

    def as_csv(self):
        return [
            self.dataset, self.n, self.l, self.v,
            "" if self.c is None else self.c, self.k, self.seed,
            _fmt(self.accuracy), _fmt(self.purity),
            _fmt(self.mse_final, "{:.10g}"), _fmt(self.kld_final, "{:.10g}"),
            _fmt(self.wall_seconds, "{:.3f}"), self.algorithm,
        ]


def prepare_dataset(path, fmt, labels_path=None, do_normalize=True):
    ds = load_dataset(path, fmt=Format(fmt), labels_path=labels_path)
    if do_normalize:
        ds = normalize(ds)
    return pad_time(ds, PAD_MULTIPLE)


def _mean_row(rows):
    def mean_of(attr):
        vals = [getattr(r, attr) for r in rows if getattr(r, attr) is not None]
        return float(np.mean(vals)) if vals else None

    first = rows[0]
    return ResultRow(
        dataset=first.dataset, n=first.n, l=first.l, v=first.v, c=first.c,
        k=first.k, seed="mean",
        accuracy=mean_of("accuracy"), purity=mean_of("purity"),
        mse_final=mean_of("mse_final"), kld_final=mean_of("kld_final"),
        wall_seconds=mean_of("wall_seconds"), algorithm=first.algorithm,
    )


def _write_results(rows, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(RESULT_COLUMNS)
        for row in rows:
            w.writerow(row.as_csv())


def _scores(pred, truth):
    if truth is None:
        return None, None
    return metrics.clustering_accuracy(pred, truth), metrics.purity(pred, truth)


def run_cluster(
    data,
    k,
    out,
    fmt="long_csv",
    labels_path=None,
    seed=0,
    repeats=1,
    do_normalize=True,
    train_cfg=None,
    model_cfg=None,
):
    """Single-dataset deep clustering; one results row per seed plus a mean row."""
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    out = Path(out)
    ds = prepare_dataset(data, fmt, labels_path, do_normalize)
    train_cfg = train_cfg or TrainConfig()
    model_cfg = model_cfg or CtaeConfig()
    rows = []
    trace_paths = []
    for r in range(repeats):
        seed_r = seed + r
        cfg_r = TrainConfig(
            pretrain_epochs=train_cfg.pretrain_epochs,
            train_epochs=train_cfg.train_epochs,
            batch_size=train_cfg.batch_size,
            lr=train_cfg.lr,
            seed=seed_r,
        )
        mdl_r = CtaeConfig(
            conv_channels=model_cfg.conv_channels,
            kernel_width=model_cfg.kernel_width,
            lstm_hidden_1=model_cfg.lstm_hidden_1,
            lstm_hidden_2=model_cfg.lstm_hidden_2,
            activation=model_cfg.activation,
            seed=seed_r,
        )
        t0 = time.perf_counter()
        trained = train_full(ds, k, cfg_r, model_config=mdl_r)
        wall = time.perf_counter() - t0
        acc, pur = _scores(trained.assignments, ds.labels)
        rows.append(ResultRow(
            dataset=ds.name, n=ds.n, l=ds.length, v=ds.variables, c=ds.num_classes,
            k=k, seed=str(seed_r), accuracy=acc, purity=pur,
            mse_final=trained.mse_trace[-1] if trained.mse_trace else None,
            kld_final=trained.final_kld, wall_seconds=wall, algorithm="ltc",
        ))
        out.mkdir(parents=True, exist_ok=True)
        trace_path = out / f"trace_seed{seed_r}.csv"
        write_trace_csv(trained, trace_path)
        trace_paths.append(str(trace_path))
    if repeats > 1:
        rows.append(_mean_row(rows[:repeats]))
    results_path = out / "results.csv"
    _write_results(rows, results_path)
    return rows, str(results_path), trace_paths


def run_baseline(
    data, k, out, fmt="long_csv", labels_path=None, seed=0, repeats=1, do_normalize=True
):
    """k-means over the flattened series (data space, no latent model)."""
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    out = Path(out)
    ds = prepare_dataset(data, fmt, labels_path, do_normalize)
    flat = ds.samples.reshape(ds.n, -1)
    rows = []
    for r in range(repeats):
        seed_r = seed + r
        t0 = time.perf_counter()
        pred = metrics.kmeans(flat, k, seed=seed_r)
        wall = time.perf_counter() - t0
        acc, pur = _scores(pred, ds.labels)
        rows.append(ResultRow(
            dataset=ds.name, n=ds.n, l=ds.length, v=ds.variables, c=ds.num_classes,
            k=k, seed=str(seed_r), accuracy=acc, purity=pur,
            mse_final=None, kld_final=None, wall_seconds=wall, algorithm="kmeans",
        ))
    if repeats > 1:
        rows.append(_mean_row(rows[:repeats]))
    results_path = out / "results.csv"
    _write_results(rows, results_path)
    return rows, str(results_path)


@dataclass
class LifelongStepRow:
    step: int
    task_id: int
    decision: str
    v: float | None
    pool_size: int
    acc_task: float | None
    task_accuracies: list = field(default_factory=list)


def _evaluate_seen_task(pool, task):
    """Evaluate-only routing: best entry's clustering accuracy on a past task."""
    evals = evaluate_pool(pool, task.samples)
    best = min(evals, key=lambda e: (e.v, e.entry_id))
    entry = pool.get(best.entry_id)
    pred = assign(entry.model, task.samples)
    acc, _ = _scores(pred, task.labels)
    return acc


def run_lifelong(
    data,
    k,
    out,
    fmt="long_csv",
    labels_path=None,
    seed=0,
    do_normalize=True,
    train_cfg=None,
    model_cfg=None,
    mode="sequential",
    class_groups=None,
    num_batches=None,
    batch_size=None,
    max_fraction=0.5,
    new_class=None,
    delta=0.05,
    refine_band=0.02,
    capacity=5,
    replay_cap=256,
    ablate_single_model=False,
):
    """Task stream through the model pool with per-step back-evaluation.

    After each step every previously seen task is re-scored through the
    pool (evaluate-only), giving the accuracy trajectories that expose
    forgetting. ``ablate_single_model`` forces every post-first decision
    to refine entry 1 with replay disabled: the single-model contrast.
    """
    out = Path(out)
    ds = prepare_dataset(data, fmt, labels_path, do_normalize)
    if ds.labels is None:
        raise MissingLabels("lifelong experiments need labels for streams and scoring")
    params = StreamParams(
        class_groups=None if class_groups is None else tuple(tuple(g) for g in class_groups),
        num_batches=num_batches,
        batch_size=batch_size,
        max_fraction=max_fraction,
        new_class=new_class,
    )
    stream = make_stream(ds, StreamMode(mode), params, seed=seed)
    ks = k if isinstance(k, (list, tuple)) else [k] * len(stream.tasks)
    if len(ks) != len(stream.tasks):
        raise ConfigError(f"{len(ks)} cluster counts for {len(stream.tasks)} tasks")
    train_cfg = train_cfg or TrainConfig()
    model_cfg = model_cfg or CtaeConfig(seed=seed)
    cfg = TrainConfig(
        pretrain_epochs=train_cfg.pretrain_epochs,
        train_epochs=train_cfg.train_epochs,
        batch_size=train_cfg.batch_size,
        lr=train_cfg.lr,
        seed=seed,
    )
    pool_dir = out / "pool"
    pool = ModelPool(
        pool_dir, capacity=capacity, delta=delta,
        refine_band=refine_band, replay_cap=replay_cap,
    )
    rows = []
    for step, task in enumerate(stream.tasks):
        force = None
        if ablate_single_model and pool.entries:
            force = (DecisionKind.REFINE, pool.entries[0].id)
        labels, decision = lifelong_step(
            pool, task, ks[step], cfg, model_config=model_cfg, force=force
        )
        acc, _ = _scores(labels, task.labels)
        task_accs = [
            _evaluate_seen_task(pool, stream.tasks[j]) for j in range(step + 1)
        ]
        rows.append(LifelongStepRow(
            step=step, task_id=step, decision=decision.kind.value, v=decision.v,
            pool_size=len(pool.entries), acc_task=acc, task_accuracies=task_accs,
        ))
    save_pool(pool)
    csv_path = out / "lifelong.csv"
    _write_lifelong_csv(rows, len(stream.tasks), csv_path)
    return rows, str(csv_path), str(pool_dir)


def _write_lifelong_csv(rows, n_tasks, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ["step", "task_id", "decision", "v", "pool_size", "acc_task"]
    header += [f"acc_task_{j}" for j in range(n_tasks)]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            accs = [_fmt(a) for a in row.task_accuracies]
            accs += [""] * (n_tasks - len(accs))
            w.writerow(
                [row.step, row.task_id, row.decision, _fmt(row.v), row.pool_size,
                 _fmt(row.acc_task)] + accs
            )


# --- pool checkpoint inspection ----------------------------------------------

def pool_list(checkpoint):
    """Live and evicted entry summaries from a pool checkpoint."""
    pool = load_pool(checkpoint)
    live = [
        {"id": e.id, "p_c": e.model.tc.p_c, "h": e.h,
         "created_at": e.created_at, "evicted": False}
        for e in pool.entries
    ]
    gone = [
        {"id": rec["id"], "p_c": rec["p_c"], "h": rec["h"],
         "created_at": rec["created_at"], "evicted": True}
        for rec in pool.evicted
    ]
    return live + gone


def pool_inspect(checkpoint, entry_id):
    """One entry's manifest (live entries first, then the eviction catalog)."""
    checkpoint = Path(checkpoint)
    for sub in ("entries", "evicted"):
        candidate = checkpoint / sub / str(entry_id)
        if (candidate / "entry.json").is_file():
            entry = load_entry(candidate)
            return {
                "id": entry.id,
                "h": entry.h,
                "created_at": entry.created_at,
                "p_c": entry.model.tc.p_c,
                "alpha": entry.model.tc.alpha,
                "k": entry.model.tc.k,
                "latent_dim": entry.model.tc.dim,
                "replay_size": 0 if entry.replay is None else int(entry.replay.shape[0]),
                "evicted": sub == "evicted",
                "path": str(candidate),
            }
    raise MissingCheckpoint(f"no entry {entry_id} under {checkpoint}")
