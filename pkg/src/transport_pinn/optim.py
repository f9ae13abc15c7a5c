"""Update rules on the flat parameter vector (network parameters, then C if trainable)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def _check_lengths(params, grads):
    if params.shape != grads.shape:
        raise ValueError(f"parameter/gradient length mismatch: {params.shape} vs {grads.shape}")


def sgd_step(params: np.ndarray, grads: np.ndarray, learning_rate: float) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    _check_lengths(params, grads)
    return params - learning_rate * grads


def adam_step(
    state: AdamState, params: np.ndarray, grads: np.ndarray, config: OptimizerConfig
) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update.  Inputs are not modified."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    _check_lengths(params, grads)
    if state.first_moment.shape != params.shape:
        raise ValueError("Adam state does not match parameter length")
    b1, b2 = config.beta1, config.beta2
    step = state.step_count + 1
    m = b1 * state.first_moment + (1.0 - b1) * grads
    v = b2 * state.second_moment + (1.0 - b2) * (grads * grads)
    m_hat = m / (1.0 - b1**step)
    v_hat = v / (1.0 - b2**step)
    new = params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return AdamState(m, v, step), new


@dataclass
class Optimizer:
    """Stateful wrapper the trainer drives; ``state`` is None for SGD."""

    config: OptimizerConfig
    n: int
    state: AdamState | None = field(default=None)

    def __post_init__(self):
        if self.config.kind == "adam" and self.state is None:
            self.state = AdamState.zeros(self.n)

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        if self.config.kind == "sgd":
            return sgd_step(params, grads, self.config.learning_rate)
        self.state, params = adam_step(self.state, params, grads, self.config)
        return params
