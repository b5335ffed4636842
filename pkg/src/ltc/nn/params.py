"""Named float64 parameter store with Adam state and flat-blob checkpoints."""

import json
import os
from pathlib import Path

import numpy as np

from ..errors import MissingCheckpoint, ShapeMismatch

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CHECKPOINT_VERSION = 1
_MANIFEST = "manifest.json"


class ParamStore:
    """Ordered mapping of parameter names to float64 arrays.

    Each parameter owns a matching pair of Adam moment accumulators; the
    step counter is shared by the whole store.
    """

    def __init__(self):
        self._params: dict[str, np.ndarray] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name, value):
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        arr = np.ascontiguousarray(value, dtype=np.float64)
        self._params[name] = arr
        self._m[name] = np.zeros_like(arr)
        self._v[name] = np.zeros_like(arr)
        return arr

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grads(self):
        """Fresh gradient dict, one zero array per parameter."""
        return {name: np.zeros_like(p) for name, p in self._params.items()}

    def copy(self):
        out = ParamStore()
        for name, p in self._params.items():
            out.add(name, p.copy())
        return out

    def copy_values_from(self, other):
        """Overwrite parameter values in place; Adam state is reset."""
        if set(self._params) != set(other._params):
            raise ShapeMismatch("parameter stores do not share the same names")
        for name, p in self._params.items():
            src = other._params[name]
            if src.shape != p.shape:
                raise ShapeMismatch(f"{name}: {src.shape} vs {p.shape}")
            p[...] = src
            self._m[name][...] = 0.0
            self._v[name][...] = 0.0
        self.step = 0

    def bytes_equal(self, other):
        if self.names() != other.names():
            return False
        return all(
            self._params[n].tobytes() == other._params[n].tobytes()
            for n in self._params
        )


def adam_step(store, grads, lr):
    """In-place Adam update of every parameter in ``store``.

    ``grads`` must supply one gradient per parameter, shape-matched.
    beta1=0.9, beta2=0.999, eps=1e-8, with bias correction.
    """
    for name, p in store._params.items():
        if name not in grads:
            raise ShapeMismatch(f"missing gradient for {name!r}")
        if grads[name].shape != p.shape:
            raise ShapeMismatch(
                f"{name}: gradient shape {grads[name].shape} vs parameter {p.shape}"
            )
    store.step += 1
    t = store.step
    bc1 = 1.0 - ADAM_BETA1 ** t
    bc2 = 1.0 - ADAM_BETA2 ** t
    for name, p in store._params.items():
        g = grads[name]
        m = store._m[name]
        v = store._v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)


def glorot_uniform(rng, shape, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def save_params(store, directory, layer_specs=None):
    """Write a checkpoint: JSON manifest plus one little-endian f64 blob per parameter."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (name, p) in enumerate(store.items()):
        fname = f"p{i:04d}.bin"
        with open(directory / fname, "wb") as f:
            f.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
        entries.append({"name": name, "shape": list(p.shape), "file": fname})
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "layers": layer_specs if layer_specs is not None else [],
        "params": entries,
    }
    with open(directory / _MANIFEST, "w") as f:
        json.dump(manifest, f, indent=1)


def load_params(directory):
    """Read a checkpoint written by :func:`save_params`.

    Returns ``(store, manifest)``; Adam state starts fresh.
    """
    directory = Path(directory)
    mpath = directory / _MANIFEST
    if not os.path.isfile(mpath):
        raise MissingCheckpoint(f"no manifest at {mpath}")
    with open(mpath) as f:
        manifest = json.load(f)
    store = ParamStore()
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        raw = (directory / entry["file"]).read_bytes()
        arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        store.add(entry["name"], arr)
    return store, manifest
