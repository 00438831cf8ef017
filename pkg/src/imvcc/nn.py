"""Dense networks with hand-written backprop, Adam, and a finite-difference checker."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError, TrainingError

ACTIVATIONS = ("relu", "linear")
CHECKPOINT_MAGIC = b"MLP1"


@dataclass
class DenseLayer:
    weights: np.ndarray  # out x in
    bias: np.ndarray  # out
    activation: str = "linear"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ContractError(f"bias {self.bias.shape} does not match weights {self.weights.shape}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


class Mlp:
    """A chain of dense layers. Parameters are exposed as ``[W0, b0, W1, b1, ...]``."""

    def __init__(self, layers):
        self.layers = list(layers)
        if not self.layers:
            raise ContractError("an Mlp needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ContractError(f"layer widths do not chain: {a.out_dim} -> {b.in_dim}")
        # bumped on every in-place update so stale caches can be detected
        self.version = 0

    @classmethod
    def build(cls, sizes, rng, hidden_activation="relu", out_activation="linear"):
        """He-uniform for relu layers, Glorot-uniform for linear ones, zero biases."""
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            act = out_activation if i == len(sizes) - 2 else hidden_activation
            if act == "relu":
                limit = np.sqrt(6.0 / fan_in)
            else:
                limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
            layers.append(DenseLayer(w, np.zeros(fan_out), act))
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weights, layer.bias]
        return out

    def param_names(self, prefix: str = "") -> list[str]:
        out = []
        for i in range(len(self.layers)):
            out += [f"{prefix}{i}.W", f"{prefix}{i}.b"]
        return out

    def copy(self) -> "Mlp":
        return Mlp([DenseLayer(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers])

    def __call__(self, x):
        return mlp_forward(self, x)[0]


@dataclass
class ForwardCache:
    net_id: int
    version: int
    inputs: list = field(default_factory=list)  # input to each layer
    preacts: list = field(default_factory=list)


def mlp_forward(net: Mlp, x: np.ndarray):
    """Returns ``(y, cache)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ContractError(f"expected input of width {net.in_dim}, got shape {x.shape}")
    cache = ForwardCache(id(net), net.version)
    h = x
    for layer in net.layers:
        cache.inputs.append(h)
        a = h @ layer.weights.T + layer.bias
        cache.preacts.append(a)
        h = np.maximum(a, 0.0) if layer.activation == "relu" else a
    return h, cache


def mlp_backward(net: Mlp, cache: ForwardCache, grad_out: np.ndarray):
    """Gradients of a scalar whose derivative w.r.t. the net output is ``grad_out``.

    Returns ``(grad_params, grad_in)`` with ``grad_params`` ordered like ``net.params()``.
    """
    if cache.net_id != id(net) or cache.version != net.version or len(cache.inputs) != len(net.layers):
        raise ContractError("forward cache does not belong to this network state")
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != cache.preacts[-1].shape:
        raise ContractError(f"grad_out shape {g.shape} != output shape {cache.preacts[-1].shape}")
    grads = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if layer.activation == "relu":
            g = g * (cache.preacts[i] > 0)
        grads[2 * i] = g.T @ cache.inputs[i]
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ layer.weights
    return grads, g


# --------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, **hyper) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **hyper)


def adam_step(params, grads, state: AdamState, names=None):
    """Bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ContractError("parameter, gradient and state lists differ in length")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.m[i].shape:
            raise ContractError(f"shape mismatch for parameter {i}: {p.shape} vs {g.shape}")
        if not np.all(np.isfinite(g)):
            name = names[i] if names is not None else f"#{i}"
            raise TrainingError(f"non-finite gradient for parameter {name}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# --------------------------------------------------------------------------
# gradient checking

@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    worst: tuple | None  # (param index, flat index)
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def grad_check(loss_fn, params, h=1e-5, tol=1e-5, n_coords=100, seed=0, floor=1e-8, loss_floor=0.0):
    """Compare analytic gradients with central differences.

    ``loss_fn()`` must return ``(loss, grads)`` for the current values of
    ``params`` (perturbed in place here and restored afterwards). At most
    ``n_coords`` coordinates are sampled; all of them when fewer exist.
    The relative error is ``|a - n| / max(|a|, |n|, floor, loss_floor * max(1, |L|))``.
    The difference quotient carries rounding noise of order ``eps * |L| / h``,
    so a positive ``loss_floor`` keeps coordinates whose gradient is tiny
    next to the loss ``L`` from being judged on that noise alone.
    """
    params = list(params)
    sizes = [p.size for p in params]
    total = int(sum(sizes))
    if total == 0:
        return GradCheckReport(0.0, 0, None, tol)
    base, analytic = loss_fn()
    analytic = [np.array(g, dtype=np.float64, copy=True) for g in analytic]
    floor = max(floor, loss_floor * max(1.0, abs(float(base))))
    rng = np.random.default_rng(seed)
    picks = np.arange(total) if total <= n_coords else np.sort(rng.choice(total, n_coords, replace=False))
    offsets = np.cumsum([0] + sizes)
    worst, worst_err = None, 0.0
    for flat in picks:
        pi = int(np.searchsorted(offsets, flat, side="right") - 1)
        idx = int(flat - offsets[pi])
        view = params[pi].reshape(-1)
        old = view[idx]
        view[idx] = old + h
        up = loss_fn()[0]
        view[idx] = old - h
        down = loss_fn()[0]
        view[idx] = old
        numeric = (up - down) / (2 * h)
        a = analytic[pi].reshape(-1)[idx]
        err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
        if err > worst_err or worst is None:
            worst_err, worst = err, (pi, idx)
    return GradCheckReport(float(worst_err), int(picks.size), worst, tol)


# --------------------------------------------------------------------------
# checkpoints

def mlp_to_bytes(net: Mlp) -> bytes:
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(net.layers))]
    for layer in net.layers:
        parts.append(struct.pack("<IIB", layer.out_dim, layer.in_dim, ACTIVATIONS.index(layer.activation)))
    for layer in net.layers:
        parts.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    return b"".join(parts)


def mlp_from_bytes(blob: bytes) -> Mlp:
    if blob[:4] != CHECKPOINT_MAGIC:
        raise DataError(f"bad checkpoint magic {blob[:4]!r}")
    (n_layers,) = struct.unpack_from("<I", blob, 4)
    off = 8
    shapes = []
    for _ in range(n_layers):
        out_d, in_d, act = struct.unpack_from("<IIB", blob, off)
        shapes.append((out_d, in_d, ACTIVATIONS[act]))
        off += 9
    layers = []
    for out_d, in_d, act in shapes:
        w = np.frombuffer(blob, "<f8", out_d * in_d, off).reshape(out_d, in_d).copy()
        off += 8 * out_d * in_d
        b = np.frombuffer(blob, "<f8", out_d, off).copy()
        off += 8 * out_d
        layers.append(DenseLayer(w, b, act))
    if off != len(blob):
        raise DataError(f"checkpoint has {len(blob) - off} trailing bytes")
    return Mlp(layers)
