"""Fully-connected network whose passes run through the tiled runtime.

Forward:  Y = X @ W + b, A = act(Y).
Backward: dW = X^T @ dY, db = column-sum(dY), dX = dY @ W^T.

Every product goes through a pluggable GEMM backend.  The dense backend
is the fixed-order reference product; the tiled backend is a scheduler
session.  Both use the same per-element accumulation order, so a
training trajectory is bit-identical between them -- the whole point of
the module is proving that reduction drives the runtime correctly.

Transposed operands are passed as views with stable tile identities, so
the cache sees the forward pass's tiles again during the backward pass.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .devices import Machine
from .scheduler import Runtime
from .tiles import reference_gemm

ACTIVATIONS = ("identity", "sigmoid", "relu")


def activate(name: str, y: np.ndarray) -> np.ndarray:
    if name == "identity":
        return y
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-y))
    if name == "relu":
        return np.maximum(y, 0.0)
    raise ValueError(f"unknown activation {name!r}")


def activation_grad(name: str, y: np.ndarray, a: np.ndarray) -> np.ndarray:
    """d act / d y, from the pre-activation y and the activation output a."""
    if name == "identity":
        return np.ones_like(y)
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "relu":
        return (y > 0.0).astype(y.dtype)
    raise ValueError(f"unknown activation {name!r}")


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    return float(((pred - target) ** 2).mean())


def mse_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    return 2.0 * (pred - target) / pred.size


# -- GEMM backends ---------------------------------------------------------


class DenseBackend:
    """Single-threaded fixed-order products; the comparison baseline."""

    def multiply(self, a, b, transpose_a=False, transpose_b=False,
                 a_uid=None, b_uid=None):
        a = a.T if transpose_a else a
        b = b.T if transpose_b else b
        return reference_gemm(a, b)

    def fresh_uid(self, prefix: str = "m"):
        return None

    def sim_time(self):
        return None


class TiledBackend:
    """Products through a persistent scheduler session.

    Tile residency and device clocks carry across calls, so consecutive
    products of one training step reuse each other's cached tiles.
    """

    def __init__(self, machine: Machine, tile_size: int, mode: str = "sim",
                 steal: bool = True, coherence: bool = True,
                 directory_debug: bool = False):
        self.runtime = Runtime(machine, tile_size, mode=mode, steal=steal,
                               coherence=coherence, directory_debug=directory_debug)
        self.call_stats = []

    def multiply(self, a, b, transpose_a=False, transpose_b=False,
                 a_uid=None, b_uid=None):
        c, stats = self.runtime.multiply(a, b, transpose_a=transpose_a,
                                         transpose_b=transpose_b,
                                         a_uid=a_uid, b_uid=b_uid)
        self.call_stats.append(stats)
        return c

    def fresh_uid(self, prefix: str = "m"):
        return self.runtime.fresh_uid(prefix)

    def sim_time(self):
        return self.runtime.sim_now() if self.runtime.mode == "sim" else None


# -- layers and networks -----------------------------------------------------


@dataclass
class Layer:
    weights: np.ndarray  # fan_in x fan_out
    bias: np.ndarray | None = None  # fan_out
    activation: str = "sigmoid"
    tag: str = "layer"
    version: int = 0  # bumped on every parameter update to retire stale cache keys

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.bias.shape != (self.weights.shape[1],):
                raise ValueError(
                    f"bias shape {self.bias.shape} does not match fan_out "
                    f"{self.weights.shape[1]}"
                )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def fan_in(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[1]

    @property
    def weight_uid(self) -> str:
        return f"{self.tag}.w.v{self.version}"

    @classmethod
    def random(cls, fan_in: int, fan_out: int, rng: np.random.Generator,
               activation: str = "sigmoid", scale: float = 1.0,
               bias: bool = True, tag: str = "layer") -> "Layer":
        w = rng.uniform(-scale, scale, size=(fan_in, fan_out))
        b = rng.uniform(-scale, scale, size=fan_out) if bias else None
        return cls(w, b, activation, tag=tag)


def forward_layer(layer: Layer, x: np.ndarray, backend, x_uid=None):
    """Returns (pre-activation, activation output)."""
    if x.shape[1] != layer.fan_in:
        raise ValueError(f"input width {x.shape[1]} != fan_in {layer.fan_in}")
    y = backend.multiply(x, layer.weights, a_uid=x_uid, b_uid=layer.weight_uid)
    if layer.bias is not None:
        y = y + layer.bias
    return y, activate(layer.activation, y)


def backward_layer(layer: Layer, x: np.ndarray, d_y: np.ndarray, backend,
                   x_uid=None, dy_uid=None):
    """Gradients for one layer given d loss / d pre-activation.

    Both products run through the backend; the transposes are tile views,
    not copies.
    """
    if d_y.shape != (x.shape[0], layer.fan_out):
        raise ValueError(f"gradient shape {d_y.shape} inconsistent with layer")
    d_w = backend.multiply(x, d_y, transpose_a=True, a_uid=x_uid, b_uid=dy_uid)
    d_x = backend.multiply(d_y, layer.weights, transpose_b=True,
                           a_uid=dy_uid, b_uid=layer.weight_uid)
    d_b = d_y.sum(axis=0) if layer.bias is not None else None
    return d_w, d_b, d_x


@dataclass
class Network:
    layers: list[Layer] = field(default_factory=list)

    @classmethod
    def from_sizes(cls, sizes: list[int], rng: np.random.Generator,
                   activation: str = "sigmoid", scale: float = 1.0,
                   bias: bool = True) -> "Network":
        """Layer sizes like [2, 8, 1]; every layer uses ``activation``."""
        if len(sizes) < 2:
            return cls([])
        layers = [
            Layer.random(sizes[i], sizes[i + 1], rng, activation=activation,
                         scale=scale, bias=bias, tag=f"layer{i}")
            for i in range(len(sizes) - 1)
        ]
        return cls(layers)

    def forward(self, x: np.ndarray, backend):
        """Full forward pass; returns (inputs, preacts, acts, uids) per layer."""
        xs, ys, acts, uids = [], [], [], []
        cur = x
        cur_uid = backend.fresh_uid("x")
        for layer in self.layers:
            xs.append(cur)
            uids.append(cur_uid)
            y, a = forward_layer(layer, cur, backend, x_uid=cur_uid)
            ys.append(y)
            acts.append(a)
            cur = a
            cur_uid = backend.fresh_uid("x")
        return xs, ys, acts, uids

    def predict(self, x: np.ndarray, backend=None) -> np.ndarray:
        backend = backend or DenseBackend()
        _, _, acts, _ = self.forward(x, backend)
        return acts[-1] if acts else x


def _backward_pass(net: Network, xs, ys, acts, uids, pred, target, backend):
    """Common backward walk; returns per-layer (dW, db) without updating."""
    grads = [None] * len(net.layers)
    d_out = mse_grad(pred, target)
    for l in reversed(range(len(net.layers))):
        layer = net.layers[l]
        d_y = d_out * activation_grad(layer.activation, ys[l], acts[l])
        dy_uid = backend.fresh_uid("dy")
        d_w, d_b, d_x = backward_layer(layer, xs[l], d_y, backend,
                                       x_uid=uids[l], dy_uid=dy_uid)
        grads[l] = (d_w, d_b)
        d_out = d_x
    return grads


def loss_gradients(net: Network, x: np.ndarray, target: np.ndarray, backend):
    """One forward+backward pass, no update: (MSE loss, per-layer (dW, db))."""
    xs, ys, acts, uids = net.forward(x, backend)
    pred = acts[-1] if acts else x
    grads = _backward_pass(net, xs, ys, acts, uids, pred, target, backend)
    return mse(pred, target), grads


def train_step(net: Network, x: np.ndarray, target: np.ndarray, lr: float,
               backend) -> float:
    """Forward, MSE loss, backward, SGD update.  Returns the loss."""
    loss, grads = loss_gradients(net, x, target, backend)
    for layer, (d_w, d_b) in zip(net.layers, grads):
        layer.weights = layer.weights - lr * d_w
        if layer.bias is not None and d_b is not None:
            layer.bias = layer.bias - lr * d_b
        layer.version += 1  # old weight tiles are dead cache entries now
    return loss


def bench_pass(net: Network, x: np.ndarray, target: np.ndarray, backend,
               repeats: int = 10) -> float:
    """Mean time for one forward+backward pass over ``repeats`` samples.

    Simulated time when the backend runs a sim-mode session, wall clock
    otherwise.  No parameter updates happen.
    """
    samples = []
    for _ in range(repeats):
        sim_before = backend.sim_time()
        t0 = time.perf_counter()
        loss_gradients(net, x, target, backend)
        wall = time.perf_counter() - t0
        sim_after = backend.sim_time()
        if sim_before is not None:
            samples.append(sim_after - sim_before)
        else:
            samples.append(wall)
    return float(np.mean(samples)) if samples else 0.0


# -- verification and data helpers ------------------------------------------


def finite_difference_gradients(net: Network, x: np.ndarray, target: np.ndarray,
                                h: float = 1e-5):
    """Central-difference loss gradients for every parameter.

    Independent of the backward pass: only repeated forward evaluations
    through the dense backend.  Returns one (dW, db) pair per layer.
    """
    backend = DenseBackend()

    def loss_now() -> float:
        return mse(net.predict(x, backend), target)

    out = []
    for layer in net.layers:
        d_w = np.zeros_like(layer.weights)
        for idx in np.ndindex(layer.weights.shape):
            orig = layer.weights[idx]
            layer.weights[idx] = orig + h
            up = loss_now()
            layer.weights[idx] = orig - h
            down = loss_now()
            layer.weights[idx] = orig
            d_w[idx] = (up - down) / (2.0 * h)
        d_b = None
        if layer.bias is not None:
            d_b = np.zeros_like(layer.bias)
            for idx in np.ndindex(layer.bias.shape):
                orig = layer.bias[idx]
                layer.bias[idx] = orig + h
                up = loss_now()
                layer.bias[idx] = orig - h
                down = loss_now()
                layer.bias[idx] = orig
                d_b[idx] = (up - down) / (2.0 * h)
        out.append((d_w, d_b))
    return out


def xor_dataset():
    x = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    target = np.array([[0.0], [1.0], [1.0], [0.0]])
    return x, target


def random_regression(rng: np.random.Generator, batch: int, n_in: int, n_out: int):
    x = rng.uniform(-1.0, 1.0, size=(batch, n_in))
    target = rng.uniform(-1.0, 1.0, size=(batch, n_out))
    return x, target
