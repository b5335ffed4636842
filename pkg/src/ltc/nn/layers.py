"""Differentiable layers with hand-written forward and backward passes.

All activations flow as float64 arrays laid out (batch, time, channels).
Forward passes return ``(y, cache)``; the cache is an opaque workspace that
the matching backward pass consumes, so concurrent forward calls on the
same layer never interfere. Backward passes accumulate parameter gradients
into a plain dict keyed by parameter name.
"""

import numpy as np
from scipy.special import expit

from ..errors import NonFiniteValue, ShapeMismatch, StaleCache
from .params import glorot_uniform

LEAKY_SLOPE = 0.01


def _check3d(x, channels=None, who=""):
    if x.ndim != 3:
        raise ShapeMismatch(f"{who}: expected (batch, time, channels), got {x.shape}")
    if channels is not None and x.shape[2] != channels:
        raise ShapeMismatch(f"{who}: expected {channels} channels, got {x.shape[2]}")


def _accumulate(grads, name, value):
    if name in grads:
        grads[name] += value
    else:
        grads[name] = value


class Layer:
    """Base layer: no parameters, identity passes."""

    name = ""

    def init(self, store, rng):
        pass

    def param_names(self):
        return []

    def forward(self, x, store):
        raise NotImplementedError

    def backward(self, dy, cache, store, grads):
        raise NotImplementedError

    def describe(self):
        return {"kind": type(self).__name__}


class CausalConv1D(Layer):
    """1D convolution over time with left padding, so output[t] sees input[<= t].

    The receptive field at dilation d and kernel width K covers
    {t, t-d, ..., t-(K-1)d}.
    """

    def __init__(self, name, in_channels, out_channels, kernel, dilation=1):
        if kernel < 1 or dilation < 1:
            raise ValueError("kernel and dilation must be >= 1")
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.dilation = dilation

    def param_names(self):
        return [f"{self.name}.W", f"{self.name}.b"]

    def init(self, store, rng):
        k, ci, co = self.kernel, self.in_channels, self.out_channels
        store.add(f"{self.name}.W", glorot_uniform(rng, (k, ci, co), k * ci, k * co))
        store.add(f"{self.name}.b", np.zeros(co))

    def forward(self, x, store):
        _check3d(x, self.in_channels, self.name)
        W = store[f"{self.name}.W"]
        b = store[f"{self.name}.b"]
        B, T, _ = x.shape
        pad = (self.kernel - 1) * self.dilation
        xpad = np.zeros((B, T + pad, self.in_channels))
        xpad[:, pad:] = x
        y = np.broadcast_to(b, (B, T, self.out_channels)).copy()
        d = self.dilation
        for k in range(self.kernel):
            y += xpad[:, k * d : k * d + T] @ W[k]
        return y, (xpad, T)

    def backward(self, dy, cache, store, grads):
        xpad, T = cache
        W = store[f"{self.name}.W"]
        B = dy.shape[0]
        d = self.dilation
        pad = (self.kernel - 1) * d
        dW = np.zeros_like(W)
        dxpad = np.zeros_like(xpad)
        dy2 = dy.reshape(B * T, self.out_channels)
        for k in range(self.kernel):
            sl = xpad[:, k * d : k * d + T]
            dW[k] = sl.reshape(B * T, self.in_channels).T @ dy2
            dxpad[:, k * d : k * d + T] += dy @ W[k].T
        _accumulate(grads, f"{self.name}.W", dW)
        _accumulate(grads, f"{self.name}.b", dy.sum(axis=(0, 1)))
        return dxpad[:, pad:]

    def describe(self):
        return {
            "kind": "CausalConv1D",
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel": self.kernel,
            "dilation": self.dilation,
        }


class MaxPool1D(Layer):
    """Non-overlapping max pooling over time; argmax positions are cached."""

    def __init__(self, size=2):
        self.size = size

    def forward(self, x, store):
        _check3d(x, who="maxpool")
        B, T, C = x.shape
        if T % self.size != 0:
            raise ShapeMismatch(f"maxpool: time {T} not divisible by {self.size}")
        xr = x.reshape(B, T // self.size, self.size, C)
        idx = xr.argmax(axis=2)
        y = np.take_along_axis(xr, idx[:, :, None, :], axis=2).squeeze(2)
        return y, (idx, x.shape)

    def backward(self, dy, cache, store, grads):
        idx, xshape = cache
        B, T, C = xshape
        dxr = np.zeros((B, T // self.size, self.size, C))
        np.put_along_axis(dxr, idx[:, :, None, :], dy[:, :, None, :], axis=2)
        return dxr.reshape(B, T, C)

    def describe(self):
        return {"kind": "MaxPool1D", "size": self.size}


class Upsample1D(Layer):
    """Repeat each timestep ``factor`` times."""

    def __init__(self, factor=2):
        self.factor = factor

    def forward(self, x, store):
        _check3d(x, who="upsample")
        return np.repeat(x, self.factor, axis=1), x.shape

    def backward(self, dy, cache, store, grads):
        B, T, C = cache
        return dy.reshape(B, T, self.factor, C).sum(axis=2)

    def describe(self):
        return {"kind": "Upsample1D", "factor": self.factor}


class Activation(Layer):
    """Elementwise nonlinearity: leaky_relu (slope 0.01), sigmoid, tanh or linear."""

    KINDS = ("leaky_relu", "sigmoid", "tanh", "linear")

    def __init__(self, kind="leaky_relu"):
        if kind not in self.KINDS:
            raise ValueError(f"unknown activation {kind!r}")
        self.kind = kind

    def forward(self, x, store):
        if self.kind == "leaky_relu":
            y = np.where(x > 0, x, LEAKY_SLOPE * x)
            return y, x
        if self.kind == "sigmoid":
            y = expit(x)
            return y, y
        if self.kind == "tanh":
            y = np.tanh(x)
            return y, y
        return x, None

    def backward(self, dy, cache, store, grads):
        if self.kind == "leaky_relu":
            return dy * np.where(cache > 0, 1.0, LEAKY_SLOPE)
        if self.kind == "sigmoid":
            return dy * cache * (1.0 - cache)
        if self.kind == "tanh":
            return dy * (1.0 - cache * cache)
        return dy

    def describe(self):
        return {"kind": "Activation", "activation": self.kind}


class TimeDistributedDense(Layer):
    """The same dense map applied independently at every timestep."""

    def __init__(self, name, in_channels, out_channels):
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels

    def param_names(self):
        return [f"{self.name}.W", f"{self.name}.b"]

    def init(self, store, rng):
        ci, co = self.in_channels, self.out_channels
        store.add(f"{self.name}.W", glorot_uniform(rng, (ci, co), ci, co))
        store.add(f"{self.name}.b", np.zeros(co))

    def forward(self, x, store):
        _check3d(x, self.in_channels, self.name)
        y = x @ store[f"{self.name}.W"] + store[f"{self.name}.b"]
        return y, x

    def backward(self, dy, cache, store, grads):
        x = cache
        B, T, _ = x.shape
        dW = x.reshape(B * T, self.in_channels).T @ dy.reshape(B * T, self.out_channels)
        _accumulate(grads, f"{self.name}.W", dW)
        _accumulate(grads, f"{self.name}.b", dy.sum(axis=(0, 1)))
        return dy @ store[f"{self.name}.W"].T

    def describe(self):
        return {
            "kind": "TimeDistributedDense",
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
        }


class TransposedConv1D(Layer):
    """Stride-1 transposed convolution over time, length preserving.

    Every input step scatters a kernel-wide window into the output; the
    output is cropped so centre alignment keeps T unchanged.
    """

    def __init__(self, name, in_channels, out_channels, kernel):
        if kernel < 1:
            raise ValueError("kernel must be >= 1")
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel

    def param_names(self):
        return [f"{self.name}.W", f"{self.name}.b"]

    def init(self, store, rng):
        k, ci, co = self.kernel, self.in_channels, self.out_channels
        store.add(f"{self.name}.W", glorot_uniform(rng, (k, ci, co), k * ci, k * co))
        store.add(f"{self.name}.b", np.zeros(co))

    def forward(self, x, store):
        _check3d(x, self.in_channels, self.name)
        W = store[f"{self.name}.W"]
        b = store[f"{self.name}.b"]
        B, T, _ = x.shape
        left = (self.kernel - 1) // 2
        ypad = np.zeros((B, T + self.kernel - 1, self.out_channels))
        for k in range(self.kernel):
            ypad[:, k : k + T] += x @ W[k]
        return ypad[:, left : left + T] + b, (x,)

    def backward(self, dy, cache, store, grads):
        (x,) = cache
        W = store[f"{self.name}.W"]
        B, T, _ = x.shape
        left = (self.kernel - 1) // 2
        dypad = np.zeros((B, T + self.kernel - 1, self.out_channels))
        dypad[:, left : left + T] = dy
        dW = np.zeros_like(W)
        dx = np.zeros_like(x)
        x2 = x.reshape(B * T, self.in_channels)
        for k in range(self.kernel):
            sl = dypad[:, k : k + T]
            dW[k] = x2.T @ sl.reshape(B * T, self.out_channels)
            dx += sl @ W[k].T
        _accumulate(grads, f"{self.name}.W", dW)
        _accumulate(grads, f"{self.name}.b", dy.sum(axis=(0, 1)))
        return dx

    def describe(self):
        return {
            "kind": "TransposedConv1D",
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel": self.kernel,
        }


# --- recurrent --------------------------------------------------------------

def _lstm_forward(x, Wx, Wh, b):
    """Single-direction LSTM. Gate order in the 4H axis: input, forget, cell, output."""
    B, T, _ = x.shape
    H = Wh.shape[0]
    pre = (x.reshape(B * T, -1) @ Wx).reshape(B, T, 4 * H) + b
    gates = np.empty((B, T, 4 * H))
    cs = np.empty((B, T, H))
    hs = np.empty((B, T, H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        a = pre[:, t] + h @ Wh
        i = expit(a[:, :H])
        f = expit(a[:, H : 2 * H])
        g = np.tanh(a[:, 2 * H : 3 * H])
        o = expit(a[:, 3 * H :])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[:, t, :H] = i
        gates[:, t, H : 2 * H] = f
        gates[:, t, 2 * H : 3 * H] = g
        gates[:, t, 3 * H :] = o
        cs[:, t] = c
        hs[:, t] = h
    return hs, (x, gates, cs, hs)


def _lstm_backward(dy, cache, Wx, Wh):
    x, gates, cs, hs = cache
    B, T, Cin = x.shape
    H = Wh.shape[0]
    dA = np.empty((B, T, 4 * H))
    dWh = np.zeros_like(Wh)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        i = gates[:, t, :H]
        f = gates[:, t, H : 2 * H]
        g = gates[:, t, 2 * H : 3 * H]
        o = gates[:, t, 3 * H :]
        tc = np.tanh(cs[:, t])
        c_prev = cs[:, t - 1] if t > 0 else np.zeros((B, H))
        h_prev = hs[:, t - 1] if t > 0 else np.zeros((B, H))
        dh = dy[:, t] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc_next = dc * f
        da = dA[:, t]
        da[:, :H] = di * i * (1.0 - i)
        da[:, H : 2 * H] = df * f * (1.0 - f)
        da[:, 2 * H : 3 * H] = dg * (1.0 - g * g)
        da[:, 3 * H :] = do * o * (1.0 - o)
        dWh += h_prev.T @ da
        dh_next = da @ Wh.T
    dA2 = dA.reshape(B * T, 4 * H)
    dWx = x.reshape(B * T, Cin).T @ dA2
    db = dA2.sum(axis=0)
    dx = (dA2 @ Wx.T).reshape(B, T, Cin)
    return dx, dWx, dWh, db


class BiLSTM(Layer):
    """Bidirectional LSTM; output channels = 2 * hidden (forward then backward)."""

    def __init__(self, name, in_channels, hidden):
        self.name = name
        self.in_channels = in_channels
        self.hidden = hidden

    def param_names(self):
        out = []
        for d in ("fw", "bw"):
            out += [f"{self.name}.{d}.Wx", f"{self.name}.{d}.Wh", f"{self.name}.{d}.b"]
        return out

    def init(self, store, rng):
        ci, H = self.in_channels, self.hidden
        for d in ("fw", "bw"):
            store.add(f"{self.name}.{d}.Wx", glorot_uniform(rng, (ci, 4 * H), ci, 4 * H))
            store.add(f"{self.name}.{d}.Wh", glorot_uniform(rng, (H, 4 * H), H, 4 * H))
            b = np.zeros(4 * H)
            b[H : 2 * H] = 1.0  # forget gate starts open
            store.add(f"{self.name}.{d}.b", b)

    def _p(self, store, d):
        return (
            store[f"{self.name}.{d}.Wx"],
            store[f"{self.name}.{d}.Wh"],
            store[f"{self.name}.{d}.b"],
        )

    def forward(self, x, store):
        _check3d(x, self.in_channels, self.name)
        hf, cache_f = _lstm_forward(x, *self._p(store, "fw"))
        hb, cache_b = _lstm_forward(np.ascontiguousarray(x[:, ::-1]), *self._p(store, "bw"))
        y = np.concatenate([hf, hb[:, ::-1]], axis=2)
        return y, (cache_f, cache_b)

    def backward(self, dy, cache, store, grads):
        cache_f, cache_b = cache
        H = self.hidden
        Wx_f, Wh_f, _ = self._p(store, "fw")
        Wx_b, Wh_b, _ = self._p(store, "bw")
        dxf, dWxf, dWhf, dbf = _lstm_backward(dy[:, :, :H], cache_f, Wx_f, Wh_f)
        dyb = np.ascontiguousarray(dy[:, ::-1, H:])
        dxb, dWxb, dWhb, dbb = _lstm_backward(dyb, cache_b, Wx_b, Wh_b)
        _accumulate(grads, f"{self.name}.fw.Wx", dWxf)
        _accumulate(grads, f"{self.name}.fw.Wh", dWhf)
        _accumulate(grads, f"{self.name}.fw.b", dbf)
        _accumulate(grads, f"{self.name}.bw.Wx", dWxb)
        _accumulate(grads, f"{self.name}.bw.Wh", dWhb)
        _accumulate(grads, f"{self.name}.bw.b", dbb)
        return dxf + dxb[:, ::-1]

    def describe(self):
        return {"kind": "BiLSTM", "in_channels": self.in_channels, "hidden": self.hidden}


class AdditiveAttention(Layer):
    """Per-timestep scalar gates from an additive score, softmax over time.

    Output is the input scaled by its gate, so sequence length and channel
    count are preserved and the gates of each sample sum to one.
    """

    def __init__(self, name, channels, units=None):
        self.name = name
        self.channels = channels
        self.units = units if units is not None else channels

    def param_names(self):
        return [f"{self.name}.W", f"{self.name}.b", f"{self.name}.v"]

    def init(self, store, rng):
        C, A = self.channels, self.units
        store.add(f"{self.name}.W", glorot_uniform(rng, (C, A), C, A))
        store.add(f"{self.name}.b", np.zeros(A))
        store.add(f"{self.name}.v", glorot_uniform(rng, (A,), A, 1))

    def forward(self, x, store):
        _check3d(x, self.channels, self.name)
        W = store[f"{self.name}.W"]
        b = store[f"{self.name}.b"]
        v = store[f"{self.name}.v"]
        s = np.tanh(x @ W + b)
        e = s @ v
        e = e - e.max(axis=1, keepdims=True)
        w = np.exp(e)
        a = w / w.sum(axis=1, keepdims=True)
        y = a[:, :, None] * x
        return y, (x, s, a)

    def backward(self, dy, cache, store, grads):
        x, s, a = cache
        W = store[f"{self.name}.W"]
        v = store[f"{self.name}.v"]
        B, T, C = x.shape
        A = self.units
        da = (dy * x).sum(axis=2)
        de = a * (da - (da * a).sum(axis=1, keepdims=True))
        ds = de[:, :, None] * v
        du = ds * (1.0 - s * s)
        _accumulate(grads, f"{self.name}.v", (s * de[:, :, None]).sum(axis=(0, 1)))
        _accumulate(
            grads, f"{self.name}.W", x.reshape(B * T, C).T @ du.reshape(B * T, A)
        )
        _accumulate(grads, f"{self.name}.b", du.sum(axis=(0, 1)))
        return dy * a[:, :, None] + du @ W.T

    def attention_weights(self, x, store):
        """Gate vector per sample, shape (batch, time); rows sum to one."""
        _, (_, _, a) = self.forward(x, store)
        return a

    def describe(self):
        return {"kind": "AdditiveAttention", "channels": self.channels, "units": self.units}


class Sequential:
    """A fixed stack of layers sharing one parameter store."""

    def __init__(self, layers):
        self.layers = list(layers)

    def init(self, store, rng):
        for layer in self.layers:
            layer.init(store, rng)

    def param_names(self):
        out = []
        for layer in self.layers:
            out += layer.param_names()
        return out

    def forward(self, x, store):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x, store)
            caches.append(cache)
        if not np.isfinite(x).all():
            raise NonFiniteValue("non-finite values in forward pass")
        return x, caches

    def backward(self, dy, caches, store, grads):
        if caches is None or len(caches) != len(self.layers):
            raise StaleCache("backward called without a matching forward cache")
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            dy = layer.backward(dy, cache, store, grads)
        if not np.isfinite(dy).all():
            raise NonFiniteValue("non-finite values in backward pass")
        return dy

    def describe(self):
        return [layer.describe() for layer in self.layers]
