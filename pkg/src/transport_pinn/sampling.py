"""Space-time domain and the training point sets (interior, wall, initial, observed)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .rng import Xoshiro256

MODES = ("uniform_random", "equispaced_grid")

# substream ids, one per point set
_INTERIOR, _BOUNDARY, _INITIAL = 1, 2, 3


@dataclass(frozen=True)
class SpaceTimeDomain:
    x_min: float = -1.5
    x_max: float = 1.5
    t_min: float = 0.0
    t_max: float = 2.0

    def __post_init__(self):
        vals = (self.x_min, self.x_max, self.t_min, self.t_max)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("domain bounds must be finite")
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be < x_max")
        if not self.t_min <= self.t_max:
            raise ValueError("t_min must be <= t_max")

    def contains(self, x, t) -> np.ndarray:
        x, t = np.asarray(x), np.asarray(t)
        return (x >= self.x_min) & (x <= self.x_max) & (t >= self.t_min) & (t <= self.t_max)


def _empty(cols: int) -> np.ndarray:
    return np.zeros((0, cols))


@dataclass
class CollocationSet:
    """Point sets as float64 arrays: (n, 2) columns x, t; observations (n, 3) x, t, u."""

    interior: np.ndarray = field(default_factory=lambda: _empty(2))
    boundary: np.ndarray = field(default_factory=lambda: _empty(2))
    initial: np.ndarray = field(default_factory=lambda: _empty(2))
    observations: np.ndarray = field(default_factory=lambda: _empty(3))

    def __post_init__(self):
        for name, cols in (("interior", 2), ("boundary", 2), ("initial", 2), ("observations", 3)):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1, cols)
            setattr(self, name, arr)


def _check_count(n: int) -> None:
    if int(n) < 1:
        raise ValueError(f"point count must be >= 1, got {n}")


def _open_unit(rng: Xoshiro256) -> float:
    """Uniform draw strictly inside (0, 1)."""
    while True:
        u = rng.random()
        if u > 0.0:
            return u


def sample_interior(domain: SpaceTimeDomain, n: int, seed: int, mode: str = "uniform_random") -> np.ndarray:
    """x strictly inside (x_min, x_max), t in (t_min, t_max]."""
    _check_count(n)
    x0, x1, t0, t1 = domain.x_min, domain.x_max, domain.t_min, domain.t_max
    if mode == "equispaced_grid":
        nx = math.ceil(math.sqrt(n))
        nt = math.ceil(n / nx)
        fx = (np.arange(nx) + 1.0) / (nx + 1)
        ft = (np.arange(nt) + 1.0) / (nt + 1)
        xs = x0 + fx * (x1 - x0)
        ts = t0 + ft * (t1 - t0)
        tt, xx = np.meshgrid(ts, xs, indexing="ij")
        return np.stack([xx.ravel(), tt.ravel()], axis=1)[:n]
    if mode != "uniform_random":
        raise ValueError(f"unknown sampling mode {mode!r}")
    rng = Xoshiro256(seed, stream=_INTERIOR)
    pts = np.empty((n, 2))
    i = 0
    while i < n:
        x = x0 + _open_unit(rng) * (x1 - x0)
        t = t1 - rng.random() * (t1 - t0)
        # rounding can land on a wall or on t_min; redraw
        if not (x0 < x < x1) or (t <= t0 and t1 > t0):
            continue
        pts[i] = x, t
        i += 1
    return pts


def sample_boundary(domain: SpaceTimeDomain, n: int, seed: int, mode: str = "uniform_random") -> np.ndarray:
    """Points alternating between the x_min and x_max walls."""
    _check_count(n)
    x = np.where(np.arange(n) % 2 == 0, domain.x_min, domain.x_max)
    if mode == "equispaced_grid":
        per_wall = np.arange(n) // 2
        m = (n + 1) // 2
        t = domain.t_min + (per_wall + 1.0) / (m + 1) * (domain.t_max - domain.t_min)
    elif mode == "uniform_random":
        rng = Xoshiro256(seed, stream=_BOUNDARY)
        t = rng.uniform(domain.t_min, domain.t_max, n)
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    return np.stack([x, t], axis=1)


def sample_initial(domain: SpaceTimeDomain, n: int, seed: int, mode: str = "uniform_random") -> np.ndarray:
    _check_count(n)
    if mode == "equispaced_grid":
        x = domain.x_min + (np.arange(n) + 1.0) / (n + 1) * (domain.x_max - domain.x_min)
    elif mode == "uniform_random":
        rng = Xoshiro256(seed, stream=_INITIAL)
        x = rng.uniform(domain.x_min, domain.x_max, n)
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    return np.stack([x, np.full(n, domain.t_min)], axis=1)


def make_observation_grid(
    domain: SpaceTimeDomain, n_x: int, n_t: int, truth: Callable
) -> np.ndarray:
    """Equispaced (x, t, truth(x, t)) triples including the domain corners; x varies fastest."""
    if int(n_x) < 1 or int(n_t) < 1:
        raise ValueError(f"observation grid must be at least 1x1, got {n_x}x{n_t}")
    xs = np.linspace(domain.x_min, domain.x_max, int(n_x))
    ts = np.linspace(domain.t_min, domain.t_max, int(n_t))
    tt, xx = np.meshgrid(ts, xs, indexing="ij")
    x, t = xx.ravel(), tt.ravel()
    u = np.asarray(truth(x, t), dtype=np.float64)
    return np.stack([x, t, u], axis=1)


def write_points_csv(path, points: np.ndarray) -> None:
    points = np.asarray(points)
    header = ["x", "t", "u"][: points.shape[1]]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in points:
            w.writerow([repr(float(v)) for v in row])
