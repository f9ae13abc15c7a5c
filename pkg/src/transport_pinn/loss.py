"""PINN loss: weighted mean-square residual, wall, initial and observation terms."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Evaluation, Graph, Node, reverse_gradient
from .network import (
    NetworkParams,
    declare_params,
    param_feed,
    param_names,
    record_forward,
    record_input_derivs,
)
from .sampling import CollocationSet
from .transport import ConditionSpec, ResidualSpec, boundary_value, initial_condition, residual

COEFFICIENT_ROOT = "C"
TERMS = ("residual", "boundary", "initial", "observation")


@dataclass(frozen=True)
class LossWeights:
    w_f: float = 1.0
    w_b: float = 1.0
    w_i: float = 1.0
    w_obs: float = 1.0

    def __post_init__(self):
        ws = self.as_tuple()
        if not all(math.isfinite(w) and w >= 0 for w in ws):
            raise ValueError("loss weights must be finite and non-negative")
        if not any(w > 0 for w in ws):
            raise ValueError("at least one loss weight must be positive")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.w_f, self.w_b, self.w_i, self.w_obs)


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    residual_term: float
    boundary_term: float
    initial_term: float
    observation_term: float


def canonical_order(points: np.ndarray) -> np.ndarray:
    """Sort rows by (x, t) so accumulation order does not depend on sampling order."""
    if len(points) == 0:
        return points
    return points[np.lexsort((points[:, 1], points[:, 0]))]


class LossGraph:
    """The recorded loss for one architecture and one set of training points.

    Built once per run; each optimizer step only re-evaluates it with new
    parameter values.
    """

    def __init__(self, graph, total, terms, params, spec, consts):
        self.graph: Graph = graph
        self.total: Node = total
        self.terms: dict[str, Node | None] = terms
        self.layer_sizes = params.layer_sizes
        self.activation = params.activation
        self.output_linear = params.output_linear
        self.spec: ResidualSpec = spec
        self._consts = consts

    @property
    def trainable_coefficient(self) -> bool:
        return self.spec.trainable

    def feed(self, params: NetworkParams, coefficient: float | None = None) -> dict:
        if params.layer_sizes != self.layer_sizes:
            raise ValueError("parameters do not match the recorded architecture")
        feed = param_feed(params)
        feed.update(self._consts)
        if self.spec.trainable:
            c = self.spec.coefficient if coefficient is None else coefficient
            feed[COEFFICIENT_ROOT] = np.float64(c)
        return feed

    def evaluate(self, params: NetworkParams, coefficient: float | None = None) -> Evaluation:
        return self.graph.evaluate(self.feed(params, coefficient))

    def breakdown(self, ev: Evaluation) -> LossBreakdown:
        vals = {k: (0.0 if n is None else float(ev[n])) for k, n in self.terms.items()}
        return LossBreakdown(
            float(ev[self.total]),
            vals["residual"],
            vals["boundary"],
            vals["initial"],
            vals["observation"],
        )


def _mse(pred: Node, target: np.ndarray) -> Node:
    return (pred - target.reshape(-1, 1)).square().mean()


def build_loss(
    params: NetworkParams,
    spec: ResidualSpec,
    conds: ConditionSpec,
    colloc: CollocationSet,
    weights: LossWeights = LossWeights(),
) -> LossGraph:
    sets = {
        "residual": (weights.w_f, colloc.interior),
        "boundary": (weights.w_b, colloc.boundary),
        "initial": (weights.w_i, colloc.initial),
        "observation": (weights.w_obs, colloc.observations),
    }
    for name, (w, pts) in sets.items():
        if w > 0 and len(pts) == 0:
            raise ValueError(f"{name} term has weight {w} but no points")

    g = Graph()
    layers = declare_params(g, params.layer_sizes)
    coef = g.input(COEFFICIENT_ROOT) if spec.trainable else None

    def net(xs, ts):
        return record_forward(layers, xs, ts, params.activation, params.output_linear)

    def const_net(pts):
        return net(g.const(pts[:, 0:1]), g.const(pts[:, 1:2]))

    consts = {}
    terms: dict[str, Node | None] = dict.fromkeys(TERMS)
    outputs = {}
    interior = canonical_order(colloc.interior)
    if len(interior):
        xf, tf = g.input("x_f"), g.input("t_f")
        consts["x_f"] = interior[:, 0:1].copy()
        consts["t_f"] = interior[:, 1:2].copy()
        y_f = net(xf, tf)
    boundary = canonical_order(colloc.boundary)
    if len(boundary):
        outputs["boundary"] = (const_net(boundary), boundary_value(conds, boundary[:, 0], boundary[:, 1]))
    initial = canonical_order(colloc.initial)
    if len(initial):
        outputs["initial"] = (const_net(initial), initial_condition(initial[:, 0]))
    obs = canonical_order(colloc.observations)
    if len(obs):
        outputs["observation"] = (const_net(obs), obs[:, 2])

    if len(interior):
        g, y_f, y_x, y_t = record_input_derivs(g, y_f, xf, tf)
        if coef is not None:
            coef = g.node(coef)
        terms["residual"] = residual((y_f, y_x, y_t), spec, coef).square().mean()
    for name, (pred, target) in outputs.items():
        terms[name] = _mse(g.node(pred), np.asarray(target, dtype=np.float64))

    total = None
    for name, w in zip(TERMS, weights.as_tuple()):
        node = terms[name]
        if node is None or w == 0:
            continue
        contrib = node * w
        total = contrib if total is None else total + contrib
    return LossGraph(g, total, terms, params, spec, consts)


def pinn_loss(
    params: NetworkParams,
    spec: ResidualSpec,
    conds: ConditionSpec,
    colloc: CollocationSet,
    weights: LossWeights = LossWeights(),
    coefficient: float | None = None,
) -> tuple[LossGraph, LossBreakdown]:
    """Record the loss graph and evaluate it at ``params``."""
    loss = build_loss(params, spec, conds, colloc, weights)
    return loss, loss.breakdown(loss.evaluate(params, coefficient))


def loss_gradient(loss: LossGraph, ev: Evaluation) -> tuple[np.ndarray, float | None]:
    """Flat parameter gradient (network flatten order) and the coefficient gradient."""
    grads = reverse_gradient(ev, loss.total)
    flat = np.concatenate([grads[name].ravel() for name in param_names(loss.layer_sizes)])
    c = float(grads[COEFFICIENT_ROOT]) if loss.trainable_coefficient else None
    return flat, c
