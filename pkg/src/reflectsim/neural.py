"""Dense networks with hand-written backprop, Adam, and a diagonal Gaussian head.

Everything runs in float64 on numpy. Weight matrices are stored as
``(d_in, d_out)`` so a layer computes ``x @ W + b``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import count

import numpy as np

from .errors import ContractViolation

LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0
_LOG_2PI = np.log(2.0 * np.pi)
_net_ids = count()


class DenseNet:
    """ReLU hidden layers, identity output."""

    def __init__(self, dims, rng: np.random.Generator | None = None,
                 hidden_gain: float = np.sqrt(2.0), out_gain: float = 1.0):
        dims = [int(d) for d in dims]
        if len(dims) < 2 or min(dims) < 1:
            raise ValueError(f"bad layer dims {dims}")
        rng = np.random.default_rng(0) if rng is None else rng
        self.dims = dims
        self.weights = []
        self.biases = []
        for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            gain = out_gain if i == len(dims) - 2 else hidden_gain
            bound = gain * np.sqrt(3.0 / d_in)
            self.weights.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
            self.biases.append(np.zeros(d_out))
        self.id = next(_net_ids)
        self.version = 0

    @property
    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def n_params(self) -> int:
        return sum(a * b + b for a, b in zip(self.dims[:-1], self.dims[1:]))

    def touch(self):
        """Mark parameters as changed; outstanding caches become stale."""
        self.version += 1

    def copy(self) -> "DenseNet":
        other = DenseNet.__new__(DenseNet)
        other.dims = list(self.dims)
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other.id = next(_net_ids)
        other.version = 0
        return other

    def forward(self, x):
        return forward(self, x)

    def backward(self, cache, dy):
        return backward(self, cache, dy)

    def __call__(self, x):
        return forward(self, x)[0]


@dataclass
class Cache:
    net_id: int
    version: int
    inputs: list
    preacts: list
    vector: bool


@dataclass
class Grads:
    weights: list
    biases: list
    input: np.ndarray

    @property
    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def forward(net: DenseNet, x):
    """Return ``(y, cache)`` for one input vector or a batch of rows."""
    x = np.asarray(x, dtype=float)
    vector = x.ndim == 1
    h = x[None, :] if vector else x
    if h.ndim != 2 or h.shape[1] != net.dims[0]:
        raise ValueError(f"expected input of width {net.dims[0]}, got shape {x.shape}")
    inputs, preacts = [], []
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        z = h @ w + b
        preacts.append(z)
        h = z if i == last else np.maximum(z, 0.0)
    cache = Cache(net.id, net.version, inputs, preacts, vector)
    return (h[0] if vector else h), cache


def backward(net: DenseNet, cache: Cache, dy) -> Grads:
    """Gradients of a scalar loss given ``dL/dy`` (summed over batch rows)."""
    if cache.net_id != net.id or cache.version != net.version:
        raise ContractViolation("cache does not belong to the current network parameters")
    g = np.asarray(dy, dtype=float)
    g = g[None, :] if cache.vector else g
    n = len(net.weights)
    dws, dbs = [None] * n, [None] * n
    for i in range(n - 1, -1, -1):
        if i != n - 1:
            g = g * (cache.preacts[i] > 0.0)
        dws[i] = cache.inputs[i].T @ g
        dbs[i] = g.sum(axis=0)
        g = g @ net.weights[i].T
    return Grads(dws, dbs, g[0] if cache.vector else g)


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params, grads, state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """Bias-corrected Adam, updating ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


@dataclass
class GaussianHead:
    """State-independent diagonal Gaussian around a network mean."""

    log_std: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.log_std = np.clip(np.asarray(self.log_std, dtype=float), LOG_STD_MIN, LOG_STD_MAX)

    @property
    def dim(self) -> int:
        return self.log_std.size

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)

    def clamp(self):
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)

    def entropy(self) -> float:
        return float(np.sum(self.log_std + 0.5 * (_LOG_2PI + 1.0)))


def log_prob_of(head: GaussianHead, mean, action):
    """Diagonal Gaussian log density; batches reduce over the last axis."""
    z = (np.asarray(action, dtype=float) - mean) / head.std
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(head.log_std) - 0.5 * head.dim * _LOG_2PI


def policy_sample(head: GaussianHead, mean, rng: np.random.Generator):
    mean = np.asarray(mean, dtype=float)
    action = mean + head.std * rng.standard_normal(mean.shape)
    return action, log_prob_of(head, mean, action)


def log_prob_grads(head: GaussianHead, mean, action):
    """``d log p / d mean`` (per row) and ``d log p / d log_std`` (per row)."""
    std = head.std
    diff = np.asarray(action, dtype=float) - mean
    z = diff / std
    return diff / std**2, z * z - 1.0
