"""Recorded computation graphs with reverse-mode and forward-mode derivatives.

A :class:`Graph` is a topologically ordered list of nodes built through
:class:`Node` operator overloading.  Node values are float64 numpy arrays;
scalars are 0-d arrays and every elementwise kind follows numpy broadcasting,
so one graph can carry a whole batch of collocation points at once.

The graph itself holds no values.  :meth:`Graph.evaluate` takes a feed for
the named roots and returns an :class:`Evaluation` buffer, which is what
:func:`reverse_gradient` and :func:`forward_tangent` consume.  The same graph
can be evaluated any number of times, concurrently if desired.

Input derivatives of a network must themselves be differentiable with
respect to the parameters.  :func:`record_tangent_as_graph` writes the
forward-mode tangent computation into a new graph (sharing the original
roots), after which :func:`reverse_gradient` over a tangent node gives the
mixed partials.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "AutodiffError",
    "DualValue",
    "Evaluation",
    "Graph",
    "Node",
    "NonFiniteError",
    "OP_KINDS",
    "forward_tangent",
    "hstack",
    "record_tangent_as_graph",
    "reverse_gradient",
    "sigmoid",
]

OP_KINDS = frozenset(
    {
        "input",
        "const",
        "zeros_like",
        "ones_like",
        "add",
        "sub",
        "mul",
        "neg",
        "square",
        "exp",
        "sigmoid",
        "tanh",
        "matmul",
        "transpose",
        "sum",
        "mean",
        "hstack",
    }
)
_CONSTANT_KINDS = frozenset({"const", "zeros_like", "ones_like"})


class AutodiffError(Exception):
    """Misuse of the graph API (wrong graph, missing feed, unknown root)."""


class NonFiniteError(ArithmeticError):
    """A node evaluated to NaN or Inf."""

    def __init__(self, index: int, kind: str, where: str = "value"):
        self.index = index
        self.kind = kind
        super().__init__(f"non-finite {where} at node {index} ({kind})")


def sigmoid(z):
    """Logistic function, evaluated without overflow for large |z|."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass(frozen=True)
class DualValue:
    primal: np.ndarray
    tangent: np.ndarray


class Node:
    """Handle to one node of a graph; arithmetic on handles records new nodes."""

    __slots__ = ("graph", "index")

    def __init__(self, graph: "Graph", index: int):
        self.graph = graph
        self.index = index

    def __repr__(self):
        return f"Node({self.index}, {self.kind})"

    @property
    def kind(self) -> str:
        return self.graph._kinds[self.index]

    def _lift(self, other) -> "Node":
        if isinstance(other, Node):
            if other.graph is not self.graph:
                raise AutodiffError("operands belong to different graphs")
            return other
        return self.graph.const(other)

    def __add__(self, other):
        return self.graph._record("add", self, self._lift(other))

    def __radd__(self, other):
        return self.graph._record("add", self._lift(other), self)

    def __sub__(self, other):
        return self.graph._record("sub", self, self._lift(other))

    def __rsub__(self, other):
        return self.graph._record("sub", self._lift(other), self)

    def __mul__(self, other):
        return self.graph._record("mul", self, self._lift(other))

    def __rmul__(self, other):
        return self.graph._record("mul", self._lift(other), self)

    def __neg__(self):
        return self.graph._record("neg", self)

    def __matmul__(self, other):
        return self.graph._record("matmul", self, self._lift(other))

    @property
    def T(self):
        return self.graph._record("transpose", self)

    def square(self):
        return self.graph._record("square", self)

    def exp(self):
        return self.graph._record("exp", self)

    def sigmoid(self):
        return self.graph._record("sigmoid", self)

    def tanh(self):
        return self.graph._record("tanh", self)

    def sum(self):
        return self.graph._record("sum", self)

    def mean(self):
        return self.graph._record("mean", self)

    def zeros_like(self):
        return self.graph._record("zeros_like", self)

    def ones_like(self):
        return self.graph._record("ones_like", self)


def hstack(a: Node, b: Node) -> Node:
    """Concatenate two 2-D nodes along columns."""
    return a.graph._record("hstack", a, a._lift(b))


class Graph:
    def __init__(self):
        self._kinds: list[str] = []
        self._args: list[tuple[int, ...]] = []
        self._payload: list = []
        self._live: list[bool] = []
        self._roots: dict[str, int] = {}

    def __len__(self):
        return len(self._kinds)

    def copy(self) -> "Graph":
        g = Graph()
        g._kinds = list(self._kinds)
        g._args = list(self._args)
        g._payload = list(self._payload)
        g._live = list(self._live)
        g._roots = dict(self._roots)
        return g

    @property
    def roots(self) -> dict[str, int]:
        return dict(self._roots)

    def node(self, ref) -> Node:
        if isinstance(ref, Node):
            if ref.graph is self:
                return ref
            ref = ref.index
        if isinstance(ref, str):
            return Node(self, self._roots[ref])
        if not 0 <= ref < len(self._kinds):
            raise AutodiffError(f"no node {ref}")
        return Node(self, int(ref))

    def input(self, name: str) -> Node:
        """Declare an independent variable (parameter or coordinate)."""
        if name in self._roots:
            raise AutodiffError(f"root {name!r} already declared")
        node = self._append("input", (), name, True)
        self._roots[name] = node.index
        return node

    def const(self, value) -> Node:
        arr = np.array(value, dtype=np.float64)
        arr.setflags(write=False)
        return self._append("const", (), arr, False)

    def _append(self, kind, args, payload, live) -> Node:
        self._kinds.append(kind)
        self._args.append(args)
        self._payload.append(payload)
        self._live.append(live)
        return Node(self, len(self._kinds) - 1)

    def _record(self, kind: str, *operands: Node) -> Node:
        for op in operands:
            if op.graph is not self:
                raise AutodiffError("operands belong to different graphs")
        args = tuple(op.index for op in operands)
        live = kind not in _CONSTANT_KINDS and any(self._live[i] for i in args)
        return self._append(kind, args, None, live)

    def _resolve(self, ref) -> int:
        if isinstance(ref, Node):
            if ref.graph is not self:
                raise AutodiffError("node belongs to a different graph")
            return ref.index
        if isinstance(ref, str):
            if ref not in self._roots:
                raise AutodiffError(f"unknown root {ref!r}")
            return self._roots[ref]
        return int(ref)

    def evaluate(self, feed: Mapping) -> "Evaluation":
        """Compute every node from values for the roots.

        Raises NonFiniteError naming the first node whose value is NaN/Inf.
        """
        by_index = {}
        for key, value in feed.items():
            idx = self._resolve(key)
            if self._kinds[idx] != "input":
                raise AutodiffError(f"node {idx} is not a root")
            by_index[idx] = np.asarray(value, dtype=np.float64)
        missing = [n for n, i in self._roots.items() if i not in by_index]
        if missing:
            raise AutodiffError(f"no value fed for roots {missing}")

        vals: list[np.ndarray] = []
        with np.errstate(all="ignore"):
            for i, (kind, args) in enumerate(zip(self._kinds, self._args)):
                if kind == "input":
                    v = by_index[i]
                elif kind == "const":
                    v = self._payload[i]
                else:
                    v = _EVAL[kind](*(vals[a] for a in args))
                if not np.all(np.isfinite(v)):
                    raise NonFiniteError(i, kind)
                vals.append(v)
        return Evaluation(self, vals)


class Evaluation:
    """Value buffer produced by one evaluation of a graph."""

    def __init__(self, graph: Graph, values: list[np.ndarray]):
        self.graph = graph
        self.values = values

    def __getitem__(self, ref) -> np.ndarray:
        return self.values[self.graph._resolve(ref)]


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


_EVAL = {
    "zeros_like": np.zeros_like,
    "ones_like": np.ones_like,
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "neg": np.negative,
    "square": lambda a: a * a,
    "exp": np.exp,
    "sigmoid": sigmoid,
    "tanh": np.tanh,
    "matmul": np.matmul,
    "transpose": np.transpose,
    "sum": lambda a: np.asarray(np.sum(a)),
    "mean": lambda a: np.asarray(np.mean(a)),
    "hstack": lambda a, b: np.concatenate([a, b], axis=1),
}


def _adjoints(kind, g, out, operands):
    """Vector-Jacobian products of one node, one entry per operand."""
    if kind == "add":
        a, b = operands
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    if kind == "sub":
        a, b = operands
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    if kind == "mul":
        a, b = operands
        return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)
    if kind == "neg":
        return (-g,)
    if kind == "square":
        return (2.0 * operands[0] * g,)
    if kind == "exp":
        return (g * out,)
    if kind == "sigmoid":
        return (g * out * (1.0 - out),)
    if kind == "tanh":
        return (g * (1.0 - out * out),)
    if kind == "matmul":
        a, b = operands
        return g @ b.T, a.T @ g
    if kind == "transpose":
        return (g.T,)
    if kind == "sum":
        return (np.broadcast_to(g, operands[0].shape).copy(),)
    if kind == "mean":
        a = operands[0]
        return (np.full(a.shape, g / a.size),)
    if kind == "hstack":
        a, _ = operands
        k = a.shape[1]
        return g[:, :k], g[:, k:]
    raise AutodiffError(f"no adjoint rule for {kind}")


def reverse_gradient(evaluation: Evaluation, output) -> dict[str, np.ndarray]:
    """Gradient of ``output`` with respect to every root, keyed by root name.

    One backward sweep over the recorded nodes.  Roots the output does not
    depend on get exact zeros.  A non-scalar output is seeded with ones,
    i.e. the gradient of its sum.
    """
    if not isinstance(evaluation, Evaluation):
        raise AutodiffError("reverse_gradient needs an evaluated graph")
    graph = evaluation.graph
    vals = evaluation.values
    out = graph._resolve(output)
    adj: list = [None] * (out + 1)
    adj[out] = np.ones_like(vals[out])
    kinds, args, live = graph._kinds, graph._args, graph._live
    for i in range(out, -1, -1):
        g = adj[i]
        if g is None or not args[i] or kinds[i] in _CONSTANT_KINDS:
            continue
        operands = [vals[a] for a in args[i]]
        for a, ga in zip(args[i], _adjoints(kinds[i], g, vals[i], operands)):
            if not live[a]:
                continue
            adj[a] = ga if adj[a] is None else adj[a] + ga
    grads = {}
    for name, idx in graph._roots.items():
        g = adj[idx] if idx <= out else None
        if g is None:
            g = np.zeros_like(vals[idx])
        elif not np.all(np.isfinite(g)):
            raise NonFiniteError(idx, "input", where="gradient")
        grads[name] = g
    return grads


def _direction_index(graph: Graph, direction) -> int:
    idx = graph._resolve(direction)
    if graph._kinds[idx] != "input":
        raise AutodiffError(f"node {idx} is not a root; tangents need a root direction")
    return idx


def forward_tangent(evaluation: Evaluation, direction) -> list[DualValue]:
    """Directional derivative of every node along one root (seeded with ones)."""
    if not isinstance(evaluation, Evaluation):
        raise AutodiffError("forward_tangent needs an evaluated graph")
    graph = evaluation.graph
    d = _direction_index(graph, direction)
    vals = evaluation.values
    tan: list = [None] * len(vals)
    tan[d] = np.ones_like(vals[d])
    for i, (kind, args) in enumerate(zip(graph._kinds, graph._args)):
        if i == d or not args:
            continue
        ts = [tan[a] for a in args]
        if all(t is None for t in ts):
            continue
        xs = [vals[a] for a in args]
        out = vals[i]
        if kind == "add":
            t = _sum_opt(ts[0], ts[1])
        elif kind == "sub":
            t = _sum_opt(ts[0], None if ts[1] is None else -ts[1])
        elif kind == "mul":
            t = _sum_opt(
                None if ts[0] is None else ts[0] * xs[1],
                None if ts[1] is None else xs[0] * ts[1],
            )
        elif kind == "neg":
            t = -ts[0]
        elif kind == "square":
            t = 2.0 * xs[0] * ts[0]
        elif kind == "exp":
            t = out * ts[0]
        elif kind == "sigmoid":
            t = out * (1.0 - out) * ts[0]
        elif kind == "tanh":
            t = (1.0 - out * out) * ts[0]
        elif kind == "matmul":
            t = _sum_opt(
                None if ts[0] is None else ts[0] @ xs[1],
                None if ts[1] is None else xs[0] @ ts[1],
            )
        elif kind == "transpose":
            t = ts[0].T
        elif kind == "sum":
            t = np.asarray(np.sum(np.broadcast_to(ts[0], xs[0].shape)))
        elif kind == "mean":
            t = np.asarray(np.mean(np.broadcast_to(ts[0], xs[0].shape)))
        elif kind == "hstack":
            t = np.concatenate(
                [np.zeros_like(x) if tt is None else np.broadcast_to(tt, x.shape) for x, tt in zip(xs, ts)],
                axis=1,
            )
        else:  # zeros_like / ones_like are constant
            t = None
        tan[i] = t
    return [
        DualValue(v, np.zeros_like(v) if t is None else np.broadcast_to(t, v.shape).copy())
        for v, t in zip(vals, tan)
    ]


def _sum_opt(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def _ancestors(graph: Graph, outputs: Iterable[int]) -> set[int]:
    seen = set()
    stack = list(outputs)
    while stack:
        i = stack.pop()
        if i in seen:
            continue
        seen.add(i)
        stack.extend(graph._args[i])
    return seen


def record_tangent_as_graph(
    graph: Graph, direction, outputs: Sequence
) -> tuple[Graph, list[Node]]:
    """Record the tangent along ``direction`` of each output as new nodes.

    Returns a copy of ``graph`` extended with the tangent computation, plus
    handles (in the new graph) to the tangent of each requested output.
    Original node indices and roots are preserved, so one evaluation of the
    new graph serves both the primal and the tangent values.  Tangents that
    are structurally zero are materialized as ``zeros_like`` nodes.
    """
    d = _direction_index(graph, direction)
    out_idx = [graph._resolve(o) for o in outputs]
    needed = _ancestors(graph, out_idx)
    g = graph.copy()
    tan: dict[int, Node] = {d: g.node(d).ones_like()}
    one = None

    def t_of(i):
        return tan.get(i)

    for i in sorted(needed):
        if i == d:
            continue
        args = graph._args[i]
        if not args:
            continue
        ts = [t_of(a) for a in args]
        if all(t is None for t in ts):
            continue
        xs = [g.node(a) for a in args]
        out = g.node(i)
        kind = graph._kinds[i]
        if kind == "add":
            t = _sum_opt(ts[0], ts[1])
        elif kind == "sub":
            if ts[1] is None:
                t = ts[0]
            elif ts[0] is None:
                t = -ts[1]
            else:
                t = ts[0] - ts[1]
        elif kind == "mul":
            t = _sum_opt(
                None if ts[0] is None else ts[0] * xs[1],
                None if ts[1] is None else xs[0] * ts[1],
            )
        elif kind == "neg":
            t = -ts[0]
        elif kind == "square":
            t = 2.0 * (xs[0] * ts[0])
        elif kind == "exp":
            t = out * ts[0]
        elif kind == "sigmoid":
            if one is None:
                one = g.const(1.0)
            t = (out * (one - out)) * ts[0]
        elif kind == "tanh":
            if one is None:
                one = g.const(1.0)
            t = (one - out.square()) * ts[0]
        elif kind == "matmul":
            t = _sum_opt(
                None if ts[0] is None else ts[0] @ xs[1],
                None if ts[1] is None else xs[0] @ ts[1],
            )
        elif kind == "transpose":
            t = ts[0].T
        elif kind == "sum":
            # a tangent narrower than its primal (broadcast operand) must be
            # widened before reducing
            t = (ts[0] + xs[0].zeros_like()).sum()
        elif kind == "mean":
            t = (ts[0] + xs[0].zeros_like()).mean()
        elif kind == "hstack":
            parts = [x.zeros_like() if tt is None else tt + x.zeros_like() for x, tt in zip(xs, ts)]
            t = hstack(parts[0], parts[1])
        else:
            t = None
        if t is not None:
            tan[i] = t

    result = []
    for i in out_idx:
        t = tan.get(i)
        if t is None:
            t = g.node(i).zeros_like()
        result.append(t)
    return g, result
