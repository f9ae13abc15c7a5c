"""Fully connected surrogate u(x, t) ~ y(x, t; theta)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Graph, Node, hstack, record_tangent_as_graph, sigmoid
from .rng import Xoshiro256

ACTIVATIONS = ("sigmoid", "tanh")
INIT_STREAM = 0x1417


@dataclass(frozen=True)
class InitScheme:
    kind: str = "glorot_uniform"
    constant_weight: float = 0.5
    constant_bias: float = 0.0

    def __post_init__(self):
        if self.kind not in ("glorot_uniform", "constant"):
            raise ValueError(f"unknown init scheme {self.kind!r}")


@dataclass
class NetworkParams:
    """Weights (fan_out x fan_in) and biases per layer.

    ``output_linear`` leaves the final layer as an affine map; otherwise the
    activation is applied to the output as well.
    """

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "sigmoid"
    output_linear: bool = True

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        validate_layer_sizes(self.layer_sizes)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("one weight matrix and bias vector per layer required")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[k + 1], self.layer_sizes[k])
            if w.shape != shape or b.shape != (shape[0],):
                raise ValueError(f"layer {k}: expected W{shape}, b({shape[0]},), got {w.shape}, {b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k}: non-finite parameters")

    @property
    def n_params(self) -> int:
        return count_params(self.layer_sizes)

    def flatten(self) -> np.ndarray:
        """Layer-major: W row-major, then b, for each layer in turn."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts).astype(np.float64)

    def with_flat(self, flat: np.ndarray) -> "NetworkParams":
        return from_flat(self.layer_sizes, flat, self.activation, self.output_linear)

    def copy(self) -> "NetworkParams":
        return self.with_flat(self.flatten())


def validate_layer_sizes(layer_sizes: Sequence[int]) -> None:
    if len(layer_sizes) < 2:
        raise ValueError("layer_sizes needs at least an input and an output layer")
    if layer_sizes[0] != 2 or layer_sizes[-1] != 1:
        raise ValueError(f"layer_sizes must start with 2 and end with 1, got {list(layer_sizes)}")
    if any(int(n) < 1 for n in layer_sizes):
        raise ValueError("layer sizes must be positive")


def count_params(layer_sizes: Sequence[int]) -> int:
    return sum(o * i + o for i, o in zip(layer_sizes[:-1], layer_sizes[1:]))


def from_flat(layer_sizes, flat, activation="sigmoid", output_linear=True) -> NetworkParams:
    flat = np.asarray(flat, dtype=np.float64)
    if flat.shape != (count_params(layer_sizes),):
        raise ValueError(f"expected {count_params(layer_sizes)} parameters, got {flat.shape}")
    weights, biases = [], []
    pos = 0
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        n = fan_in * fan_out
        weights.append(flat[pos : pos + n].reshape(fan_out, fan_in).copy())
        pos += n
        biases.append(flat[pos : pos + fan_out].copy())
        pos += fan_out
    return NetworkParams(tuple(layer_sizes), weights, biases, activation, output_linear)


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_network(
    layer_sizes: Sequence[int],
    scheme: InitScheme = InitScheme(),
    seed: int = 0,
    activation: str = "sigmoid",
    output_linear: bool = True,
) -> NetworkParams:
    layer_sizes = tuple(int(n) for n in layer_sizes)
    validate_layer_sizes(layer_sizes)
    rng = Xoshiro256(seed, stream=INIT_STREAM)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        if scheme.kind == "constant":
            w = np.full((fan_out, fan_in), float(scheme.constant_weight))
            b = np.full(fan_out, float(scheme.constant_bias))
        else:
            lim = glorot_limit(fan_in, fan_out)
            w = rng.uniform(-lim, lim, fan_out * fan_in).reshape(fan_out, fan_in)
            b = np.zeros(fan_out)
        weights.append(w)
        biases.append(b)
    return NetworkParams(layer_sizes, weights, biases, activation, output_linear)


def _act(name: str, z):
    return sigmoid(z) if name == "sigmoid" else np.tanh(z)


def forward(params: NetworkParams, x, t):
    """Plain numpy evaluation; accepts scalars or equal-shape arrays."""
    x_arr = np.asarray(x, dtype=np.float64)
    t_arr = np.asarray(t, dtype=np.float64)
    shape = np.broadcast(x_arr, t_arr).shape
    a = np.stack([np.broadcast_to(x_arr, shape).ravel(), np.broadcast_to(t_arr, shape).ravel()], axis=1)
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = a @ w.T + b
        if k < last or not params.output_linear:
            a = _act(params.activation, a)
    out = a[:, 0].reshape(shape)
    return float(out) if out.ndim == 0 else out


# -- graph construction ----------------------------------------------------


def param_names(layer_sizes: Sequence[int]) -> list[str]:
    """Root names in flatten order."""
    names = []
    for k in range(len(layer_sizes) - 1):
        names += [f"W{k}", f"b{k}"]
    return names


def declare_params(graph: Graph, layer_sizes: Sequence[int]) -> list[tuple[Node, Node]]:
    return [(graph.input(f"W{k}"), graph.input(f"b{k}")) for k in range(len(layer_sizes) - 1)]


def param_feed(params: NetworkParams) -> dict[str, np.ndarray]:
    feed = {}
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        feed[f"W{k}"] = w
        feed[f"b{k}"] = b
    return feed


def record_forward(
    layers: list[tuple[Node, Node]], x: Node, t: Node, activation: str, output_linear: bool
) -> Node:
    """Record y for column inputs x, t of shape (N, 1); returns an (N, 1) node."""
    a = hstack(x, t)
    last = len(layers) - 1
    for k, (w, b) in enumerate(layers):
        a = a @ w.T + b
        if k < last or not output_linear:
            a = a.sigmoid() if activation == "sigmoid" else a.tanh()
    return a


def record_input_derivs(graph: Graph, y: Node, x: Node, t: Node) -> tuple[Graph, Node, Node, Node]:
    """Extend ``graph`` with dy/dx and dy/dt; returns (graph, y, y_x, y_t) in the new graph."""
    g1, (y_x,) = record_tangent_as_graph(graph, x, [y])
    g2, (y_t,) = record_tangent_as_graph(g1, g1.node(t), [g1.node(y)])
    return g2, g2.node(y), g2.node(y_x), y_t


@dataclass
class NetworkGraph:
    graph: Graph
    y: Node
    y_x: Node
    y_t: Node
    feed: dict = field(default_factory=dict)

    def evaluate(self):
        return self.graph.evaluate(self.feed)


def forward_with_input_derivs(params: NetworkParams, x, t) -> NetworkGraph:
    """Graph over theta holding y, dy/dx and dy/dt at the given points.

    ``x`` and ``t`` may be scalars or 1-D arrays; the nodes then have shape
    (N, 1).  The returned ``feed`` evaluates the graph at ``params``.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64)).reshape(-1, 1)
    ts = np.atleast_1d(np.asarray(t, dtype=np.float64)).reshape(-1, 1)
    g = Graph()
    layers = declare_params(g, params.layer_sizes)
    xn, tn = g.input("x"), g.input("t")
    y = record_forward(layers, xn, tn, params.activation, params.output_linear)
    g2, y, y_x, y_t = record_input_derivs(g, y, xn, tn)
    feed = param_feed(params)
    feed.update(x=xs, t=ts)
    return NetworkGraph(g2, y, y_x, y_t, feed)
