"""Dense tanh MLPs with hand-written reverse mode, and an Adam optimizer.

Weights are stored ``(out, in)`` so a layer computes ``x @ W.T + b`` on a
row batch. Models keep all trainable tensors as views into one flat vector;
the optimizer only ever sees that vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

ACTIVATIONS = ("tanh", "relu")


class StaleCacheError(RuntimeError):
    pass


@dataclass
class MLPParams:
    weights: list  # W_l, shape (out, in)
    biases: list  # b_l, shape (out,)
    activation: str = "tanh"
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ValueError(f"layer {l}: weight {W.shape} and bias {b.shape} do not match")
            if l and W.shape[1] != self.weights[l - 1].shape[0]:
                raise ValueError(f"layer {l}: input width {W.shape[1]} != previous output {self.weights[l - 1].shape[0]}")

    @property
    def widths(self) -> list[int]:
        return [self.weights[0].shape[1]] + [W.shape[0] for W in self.weights]

    def touch(self) -> None:
        """Invalidate caches after an in-place parameter update."""
        self.version += 1


@dataclass
class MLPCache:
    layer_inputs: list
    activations: list
    owner: int
    version: int


def layer_shapes(widths: Sequence[int]) -> list[tuple]:
    out = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        out += [(fan_out, fan_in), (fan_out,)]
    return out


def glorot_init(widths: Sequence[int], rng: np.random.Generator, out=None) -> list[np.ndarray]:
    """Glorot-normal weights and zero biases, optionally written into ``out`` views."""
    arrays = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        std = np.sqrt(2.0 / (fan_in + fan_out))
        arrays += [std * rng.standard_normal((fan_out, fan_in)), np.zeros(fan_out)]
    if out is not None:
        for dst, src in zip(out, arrays):
            dst[...] = src
        return out
    return arrays


def init_mlp(widths: Sequence[int], rng: np.random.Generator, activation: str = "tanh") -> MLPParams:
    arrays = glorot_init(widths, rng)
    return MLPParams(arrays[0::2], arrays[1::2], activation)


def _act(z, kind):
    return np.tanh(z) if kind == "tanh" else np.maximum(z, 0.0)


def _act_grad(h, kind):
    # derivative expressed through the activation output h
    return 1.0 - h * h if kind == "tanh" else (h > 0).astype(h.dtype)


def mlp_forward(params: MLPParams, x):
    """Affine/activation chain with a linear last layer. Returns ``(out, cache)``."""
    h = np.asarray(x, dtype=np.float64)
    squeeze = h.ndim == 1
    if squeeze:
        h = h[None, :]
    if h.shape[1] != params.weights[0].shape[1]:
        raise ValueError(f"input width {h.shape[1]} != layer 0 width {params.weights[0].shape[1]}")
    inputs, acts = [], []
    last = len(params.weights) - 1
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ W.T + b
        h = z if l == last else _act(z, params.activation)
        acts.append(h)
    cache = MLPCache(inputs, acts, id(params), params.version)
    return (h[0] if squeeze else h), cache


def mlp_gradients(params: MLPParams, cache: MLPCache, upstream, need_input_grad: bool = False):
    """Reverse-mode gradients given ``dL/d(out)``.

    Returns ``(dW list, db list, dx or None)``.
    """
    if cache.owner != id(params) or cache.version != params.version:
        raise StaleCacheError("cache does not belong to the current parameters; rerun mlp_forward")
    g = np.asarray(upstream, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    last = len(params.weights) - 1
    dWs, dbs = [None] * (last + 1), [None] * (last + 1)
    for l in range(last, -1, -1):
        if l != last:
            g = g * _act_grad(cache.activations[l], params.activation)
        dWs[l] = g.T @ cache.layer_inputs[l]
        dbs[l] = g.sum(axis=0)
        if l or need_input_grad:
            g = g @ params.weights[l]
    return dWs, dbs, (g if need_input_grad else None)


# ---------------------------------------------------------------- stacked branches


def stacked_forward(weights, biases, x, activation="tanh"):
    """Evaluate ``n`` same-shaped MLPs on a shared input batch.

    ``weights[l]`` has shape ``(n, out, in)``. Returns ``(out (n, B, r), acts)``.
    """
    n = weights[0].shape[0]
    B = x.shape[0]
    W0 = weights[0]
    z = (x @ W0.reshape(n * W0.shape[1], W0.shape[2]).T).reshape(B, n, W0.shape[1])
    z = z.transpose(1, 0, 2) + biases[0][:, None, :]
    last = len(weights) - 1
    h = z if last == 0 else _act(z, activation)
    acts = [h]
    for l in range(1, last + 1):
        z = np.matmul(h, weights[l].transpose(0, 2, 1)) + biases[l][:, None, :]
        h = z if l == last else _act(z, activation)
        acts.append(h)
    return h, acts


def stacked_backward(weights, acts, x, upstream, dweights, dbiases, activation="tanh"):
    """Accumulate gradients of the stacked MLPs into ``dweights``/``dbiases`` (overwritten)."""
    n = weights[0].shape[0]
    last = len(weights) - 1
    g = upstream
    for l in range(last, 0, -1):
        if l != last:
            g = g * _act_grad(acts[l], activation)
        np.matmul(g.transpose(0, 2, 1), acts[l - 1], out=dweights[l])
        dbiases[l][...] = g.sum(axis=1)
        g = np.matmul(g, weights[l])
    if last != 0:
        g = g * _act_grad(acts[0], activation)
    out0 = dweights[0].shape[1]
    # (n*out0, B) @ (B, in)
    gflat = g.transpose(0, 2, 1).reshape(n * out0, x.shape[0])
    dweights[0].reshape(n * out0, -1)[...] = gflat @ x
    dbiases[0][...] = g.sum(axis=1)


# ---------------------------------------------------------------- flat parameter storage


class ParamVector:
    """One contiguous float64 vector with named views."""

    def __init__(self, shapes: dict):
        self.shapes = {k: tuple(v) for k, v in shapes.items()}
        sizes = [int(np.prod(s)) for s in self.shapes.values()]
        self.data = np.zeros(sum(sizes))
        self.offsets = {}
        start = 0
        for name, size in zip(self.shapes, sizes):
            self.offsets[name] = (start, start + size)
            start += size

    def view(self, name: str, data=None) -> np.ndarray:
        lo, hi = self.offsets[name]
        src = self.data if data is None else data
        return src[lo:hi].reshape(self.shapes[name])

    def views(self, data=None) -> dict:
        return {k: self.view(k, data) for k in self.shapes}

    def copy(self) -> "ParamVector":
        new = ParamVector(self.shapes)
        new.data[:] = self.data
        return new

    def __len__(self) -> int:
        return self.data.size


@numba.njit(cache=True, fastmath=True)
def _adam_kernel(x, m, v, g, lr, b1, b2, eps, bc1, bc2):
    a = lr / bc1
    s = 1.0 / np.sqrt(bc2)
    for i in range(x.size):
        gi = g[i]
        mi = b1 * m[i] + (1.0 - b1) * gi
        vi = b2 * v[i] + (1.0 - b2) * gi * gi
        m[i] = mi
        v[i] = vi
        x[i] -= a * mi / (np.sqrt(vi) * s + eps)


class Adam:
    """Adam with bias correction, updating a flat parameter vector in place."""

    def __init__(self, size: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = float(lr), beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        _adam_kernel(params, self.m, self.v, np.ascontiguousarray(grad), self.lr,
                     self.beta1, self.beta2, self.eps, bc1, bc2)
