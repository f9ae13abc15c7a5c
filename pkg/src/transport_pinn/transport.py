"""The transport problem u_t + c u_x = 0: residual, conditions and exact solution."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import AutodiffError, Node

TRUE_SPEED = 3.0
BOUNDARY_KINDS = ("dirichlet_zero", "dirichlet_exact")


@dataclass(frozen=True)
class ResidualSpec:
    """Advection speed, either fixed or a trainable unknown with a starting value."""

    coefficient: float = TRUE_SPEED
    trainable: bool = False

    def __post_init__(self):
        if not math.isfinite(self.coefficient):
            raise ValueError("coefficient must be finite")

    @classmethod
    def fixed(cls, c: float = TRUE_SPEED) -> "ResidualSpec":
        return cls(float(c), False)

    @classmethod
    def unknown(cls, initial: float = 0.0) -> "ResidualSpec":
        return cls(float(initial), True)


@dataclass(frozen=True)
class ConditionSpec:
    boundary: str = "dirichlet_zero"

    def __post_init__(self):
        if self.boundary not in BOUNDARY_KINDS:
            raise ValueError(f"unknown boundary condition {self.boundary!r}")

    @staticmethod
    def initial(x):
        return initial_condition(x)


def exact_solution(x, t):
    s = np.asarray(x, dtype=np.float64) - TRUE_SPEED * np.asarray(t, dtype=np.float64)
    out = s * np.exp(-(s * s))
    return float(out) if out.ndim == 0 else out


def initial_condition(x):
    return exact_solution(x, 0.0)


def boundary_value(spec: ConditionSpec, wall_x, t, domain=None):
    """Prescribed u on a wall.  With ``domain`` given, ``wall_x`` must be on a wall."""
    wall_x = np.asarray(wall_x, dtype=np.float64)
    if domain is not None and not np.all((wall_x == domain.x_min) | (wall_x == domain.x_max)):
        raise ValueError("boundary_value called off the walls")
    if spec.boundary == "dirichlet_zero":
        out = np.zeros(np.broadcast(wall_x, np.asarray(t)).shape)
        return float(out) if out.ndim == 0 else out
    return exact_solution(wall_x, t)


def residual(derivs, spec: ResidualSpec, coefficient: Node | None = None) -> Node:
    """Record y_t + c y_x from ``derivs = (y, y_x, y_t)``.

    A trainable spec needs ``coefficient``, the root node holding c in the
    same graph; a fixed spec bakes c in as a constant.
    """
    _, y_x, y_t = derivs
    if y_x.graph is not y_t.graph:
        raise AutodiffError("derivative nodes come from different graphs")
    if spec.trainable:
        if coefficient is None:
            raise AutodiffError("trainable coefficient needs its root node")
        if coefficient.graph is not y_x.graph:
            raise AutodiffError("coefficient node comes from a different graph")
        return y_t + coefficient * y_x
    return y_t + spec.coefficient * y_x
