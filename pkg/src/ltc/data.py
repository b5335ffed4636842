"""Dataset ingestion, normalization, padding and task-stream generation.

Two on-disk formats are supported:

* Long CSV: header ``sample_id,timestep,v0,...,v{V-1}``, rows sorted by
  (sample_id, timestep) with timesteps 0..L-1 contiguous per sample.
  Labels, when present, live in a sibling CSV ``sample_id,label``.
* Binary: magic ``LTC1``, little-endian u64 N, L, V, then N*L*V
  little-endian f64 values in sample-major, time-major order, then one
  flag byte (1 = N little-endian i32 labels follow).

All operations are pure: they return new datasets and never mutate input.
"""

import csv
import enum
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    InvalidStream,
    MalformedFile,
    MissingFile,
    MissingLabels,
    ZeroVariance,
)

BINARY_MAGIC = b"LTC1"


@dataclass(frozen=True)
class TimeSeriesDataset:
    """N samples of length-L multivariate series with V variables.

    ``labels`` are ground-truth class ids used only for evaluation.
    ``orig_length`` records the pre-padding series length so losses can
    ignore replicated tail steps; it defaults to L.
    """

    samples: np.ndarray
    labels: np.ndarray | None = None
    num_classes: int | None = None
    name: str = "dataset"
    orig_length: int | None = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 3:
            raise MalformedFile(f"samples must be (N, L, V), got {samples.shape}")
        n, l, v = samples.shape
        if n < 1 or l < 4 or v < 1:
            raise MalformedFile(f"need N >= 1, L >= 4, V >= 1, got ({n}, {l}, {v})")
        if not np.isfinite(samples).all():
            raise MalformedFile("samples contain non-finite values")
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            object.__setattr__(self, "labels", labels)
            if labels.shape != (n,):
                raise MalformedFile(f"labels must have shape ({n},), got {labels.shape}")
            if labels.min() < 0:
                raise MalformedFile("labels must be non-negative")
            c = self.num_classes if self.num_classes is not None else int(labels.max()) + 1
            if labels.max() >= c:
                raise MalformedFile(f"label {labels.max()} out of range [0, {c})")
            object.__setattr__(self, "num_classes", c)
        if self.orig_length is None:
            object.__setattr__(self, "orig_length", l)
        elif not 1 <= self.orig_length <= l:
            raise MalformedFile(f"orig_length {self.orig_length} outside [1, {l}]")

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def length(self):
        return self.samples.shape[1]

    @property
    def variables(self):
        return self.samples.shape[2]


class StreamMode(str, enum.Enum):
    IID = "iid"
    SEQUENTIAL = "sequential"
    CONTINUOUS_DRIFT = "continuous_drift"


@dataclass(frozen=True)
class StreamParams:
    """Mode-specific knobs for :func:`make_stream`.

    ``class_groups`` (sequential): ordered, disjoint class-id groups that
    together cover every class present. ``num_batches``/``batch_size``/
    ``max_fraction``/``new_class`` shape the continuous-drift ramp.
    """

    class_groups: tuple[tuple[int, ...], ...] | None = None
    num_batches: int | None = None
    batch_size: int | None = None
    max_fraction: float = 0.5
    new_class: int | None = None


@dataclass(frozen=True)
class TaskStream:
    mode: StreamMode
    tasks: tuple[TimeSeriesDataset, ...]
    drift_schedule: tuple[float, ...] | None = None


class Format(str, enum.Enum):
    LONG_CSV = "long_csv"
    BINARY = "binary"


def default_labels_path(path):
    """Sibling labels file convention for long CSV data: ``<stem>.labels.csv``."""
    p = Path(path)
    return p.with_name(p.stem + ".labels.csv")


def load_dataset(path, fmt=Format.LONG_CSV, labels_path=None, name=None):
    """Load a dataset from disk; labels are attached when available."""
    fmt = Format(fmt)
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such file: {path}")
    if name is None:
        name = path.stem
    if fmt is Format.BINARY:
        return _load_binary(path, name)
    samples = _load_long_csv(path)
    labels = None
    if labels_path is None and default_labels_path(path).is_file():
        labels_path = default_labels_path(path)
    if labels_path is not None:
        labels_path = Path(labels_path)
        if not labels_path.is_file():
            raise MissingFile(f"no such labels file: {labels_path}")
        labels = _load_labels_csv(labels_path, samples.shape[0])
    return TimeSeriesDataset(samples=samples, labels=labels, name=name)


def _load_long_csv(path):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedFile(f"{path}: empty file") from None
        if len(header) < 3 or header[0] != "sample_id" or header[1] != "timestep":
            raise MalformedFile(f"{path}: expected header sample_id,timestep,v0,...")
        v = len(header) - 2
        per_sample: dict[int, list] = {}
        order: list[int] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != v + 2:
                raise MalformedFile(f"{path}:{lineno}: expected {v + 2} fields, got {len(row)}")
            try:
                sid = int(row[0])
                t = int(row[1])
                values = [float(x) for x in row[2:]]
            except ValueError as exc:
                raise MalformedFile(f"{path}:{lineno}: {exc}") from None
            if sid not in per_sample:
                per_sample[sid] = []
                order.append(sid)
            steps = per_sample[sid]
            if t != len(steps):
                raise MalformedFile(
                    f"{path}:{lineno}: sample {sid} timestep {t}, expected {len(steps)}"
                )
            steps.append(values)
    if not per_sample:
        raise MalformedFile(f"{path}: no data rows")
    if order != sorted(order):
        raise MalformedFile(f"{path}: rows not sorted by sample_id")
    lengths = {len(steps) for steps in per_sample.values()}
    if len(lengths) != 1:
        raise MalformedFile(f"{path}: inconsistent series lengths {sorted(lengths)}")
    return np.array([per_sample[sid] for sid in order], dtype=np.float64)


def _load_labels_csv(path, n):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or header[:2] != ["sample_id", "label"]:
            raise MalformedFile(f"{path}: expected header sample_id,label")
        pairs = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                pairs.append((int(row[0]), int(row[1])))
            except (ValueError, IndexError):
                raise MalformedFile(f"{path}:{lineno}: bad label row {row!r}") from None
    if len(pairs) != n:
        raise MalformedFile(f"{path}: {len(pairs)} labels for {n} samples")
    pairs.sort(key=lambda p: p[0])
    return np.array([label for _, label in pairs], dtype=np.int64)


def _load_binary(path, name):
    raw = path.read_bytes()
    if len(raw) < 4 + 24 or raw[:4] != BINARY_MAGIC:
        raise MalformedFile(f"{path}: missing {BINARY_MAGIC!r} magic")
    n, l, v = struct.unpack_from("<QQQ", raw, 4)
    offset = 4 + 24
    nvals = n * l * v
    need = offset + 8 * nvals + 1
    if len(raw) < need:
        raise MalformedFile(f"{path}: truncated (need {need} bytes, have {len(raw)})")
    samples = (
        np.frombuffer(raw, dtype="<f8", count=nvals, offset=offset)
        .astype(np.float64)
        .reshape(n, l, v)
    )
    offset += 8 * nvals
    flag = raw[offset]
    offset += 1
    labels = None
    if flag == 1:
        if len(raw) < offset + 4 * n:
            raise MalformedFile(f"{path}: truncated labels block")
        labels = np.frombuffer(raw, dtype="<i4", count=n, offset=offset).astype(np.int64)
    elif flag != 0:
        raise MalformedFile(f"{path}: bad labels flag {flag}")
    return TimeSeriesDataset(samples=samples, labels=labels, name=name)


def save_binary(ds, path):
    """Write a dataset in the binary format (exact f64 round trip)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n, l, v = ds.samples.shape
    with open(path, "wb") as f:
        f.write(BINARY_MAGIC)
        f.write(struct.pack("<QQQ", n, l, v))
        f.write(np.ascontiguousarray(ds.samples, dtype="<f8").tobytes())
        if ds.labels is not None:
            f.write(bytes([1]))
            f.write(np.ascontiguousarray(ds.labels, dtype="<i4").tobytes())
        else:
            f.write(bytes([0]))


def concat_datasets(datasets, name=None):
    """Stack datasets along the sample axis; shapes and labels must agree."""
    if not datasets:
        raise ValueError("nothing to concatenate")
    first = datasets[0]
    for ds in datasets[1:]:
        if ds.samples.shape[1:] != first.samples.shape[1:]:
            raise MalformedFile(
                f"shape mismatch: {ds.samples.shape[1:]} vs {first.samples.shape[1:]}"
            )
    has_labels = all(ds.labels is not None for ds in datasets)
    samples = np.concatenate([ds.samples for ds in datasets], axis=0)
    labels = (
        np.concatenate([ds.labels for ds in datasets]) if has_labels else None
    )
    return TimeSeriesDataset(
        samples=samples,
        labels=labels,
        name=name or first.name,
        orig_length=min(ds.orig_length for ds in datasets),
    )


def normalize(ds):
    """Per-variable z-score over the flattened (N*L) axis, population std."""
    flat = ds.samples.reshape(-1, ds.variables)
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    # constants show up as std ~ eps * |value| after roundoff
    dead = np.where(std <= 1e-13 * np.maximum(1.0, np.abs(mean)))[0]
    if dead.size:
        raise ZeroVariance(f"constant variable(s) at index {dead.tolist()}")
    return replace(ds, samples=(ds.samples - mean) / std)


def pad_time(ds, multiple):
    """Pad the time axis to the next multiple by replicating the final step."""
    if multiple < 1:
        raise ValueError("multiple must be >= 1")
    l = ds.length
    target = ((l + multiple - 1) // multiple) * multiple
    if target == l:
        return replace(ds, orig_length=min(ds.orig_length, l))
    tail = np.repeat(ds.samples[:, -1:, :], target - l, axis=1)
    padded = np.concatenate([ds.samples, tail], axis=1)
    return replace(ds, samples=padded, orig_length=min(ds.orig_length, l))


def make_stream(ds, mode, params=None, seed=0):
    """Order a labeled dataset into tasks for lifelong experiments.

    Deterministic given ``seed``; see :class:`StreamParams` for the
    mode-specific knobs.
    """
    mode = StreamMode(mode)
    params = params or StreamParams()
    if ds.labels is None:
        raise MissingLabels("stream construction requires labels")
    rng = np.random.default_rng(seed)
    if mode is StreamMode.IID:
        perm = rng.permutation(ds.n)
        task = replace(ds, samples=ds.samples[perm], labels=ds.labels[perm],
                       name=f"{ds.name}/iid")
        return TaskStream(mode=mode, tasks=(task,))
    if mode is StreamMode.SEQUENTIAL:
        return _sequential_stream(ds, params, rng)
    return _drift_stream(ds, params, rng)


def _sequential_stream(ds, params, rng):
    present = sorted(int(c) for c in np.unique(ds.labels))
    groups = params.class_groups
    if groups is None:
        groups = tuple((c,) for c in present)
    seen: set[int] = set()
    for group in groups:
        overlap = seen.intersection(group)
        if overlap:
            raise InvalidStream(f"classes {sorted(overlap)} appear in multiple groups")
        seen.update(group)
    missing = set(present) - seen
    if missing:
        raise InvalidStream(f"classes {sorted(missing)} not covered by any group")
    tasks = []
    for t, group in enumerate(groups):
        idx = np.where(np.isin(ds.labels, list(group)))[0]
        if idx.size == 0:
            raise InvalidStream(f"group {t} matches no samples")
        idx = idx[rng.permutation(idx.size)]
        tasks.append(
            replace(ds, samples=ds.samples[idx], labels=ds.labels[idx],
                    name=f"{ds.name}/task{t}")
        )
    return TaskStream(mode=StreamMode.SEQUENTIAL, tasks=tuple(tasks))


def _drift_stream(ds, params, rng):
    num_batches = params.num_batches
    if num_batches is None or num_batches < 2:
        raise InvalidStream("continuous drift needs num_batches >= 2")
    if not 0.0 <= params.max_fraction <= 1.0:
        raise InvalidStream("max_fraction must lie in [0, 1]")
    new_class = params.new_class
    if new_class is None:
        new_class = int(ds.labels.max())
    new_idx = np.where(ds.labels == new_class)[0]
    old_idx = np.where(ds.labels != new_class)[0]
    if new_idx.size == 0 or old_idx.size == 0:
        raise InvalidStream(f"class {new_class} cannot partition the dataset")
    batch_size = params.batch_size or max(1, ds.n // num_batches)
    schedule = []
    tasks = []
    for b in range(num_batches):
        frac = params.max_fraction * b / (num_batches - 1)
        n_new = int(round(frac * batch_size))
        n_old = batch_size - n_new
        take_new = rng.choice(new_idx, size=n_new, replace=n_new > new_idx.size)
        take_old = rng.choice(old_idx, size=n_old, replace=n_old > old_idx.size)
        idx = np.concatenate([take_old, take_new]).astype(np.int64)
        idx = idx[rng.permutation(idx.size)]
        schedule.append(frac)
        tasks.append(
            replace(ds, samples=ds.samples[idx], labels=ds.labels[idx],
                    name=f"{ds.name}/drift{b}")
        )
    return TaskStream(
        mode=StreamMode.CONTINUOUS_DRIFT, tasks=tuple(tasks), drift_schedule=tuple(schedule)
    )
