"""Training loops, run logs, checkpoints and the hand-calculation table replay."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .autodiff import NonFiniteError, sigmoid
from .config import TrainConfig, problem_hash
from .loss import LossBreakdown, LossWeights, build_loss, loss_gradient
from .network import InitScheme, NetworkParams, forward, from_flat, init_network
from .optim import AdamState, Optimizer, sgd_step
from .sampling import (
    CollocationSet,
    SpaceTimeDomain,
    make_observation_grid,
    sample_boundary,
    sample_initial,
    sample_interior,
)
from .transport import ConditionSpec, ResidualSpec, exact_solution

RUNLOG_HEADER = ["epoch", "total", "residual", "boundary", "initial", "observation", "rel_l2", "coefficient", "seconds"]
CHECKPOINT_FORMAT = "transport-pinn-checkpoint"
CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    def __init__(self, epoch: int, cause: Exception):
        self.epoch = epoch
        super().__init__(f"training aborted at epoch {epoch}: {cause}")


@dataclass(frozen=True)
class LogRow:
    epoch: int
    loss: LossBreakdown
    rel_l2: float
    coefficient: float | None
    seconds: float


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


@dataclass
class RunLog:
    rows: list[LogRow] = field(default_factory=list)

    def append(self, row: LogRow) -> None:
        if self.rows and row.epoch <= self.rows[-1].epoch:
            raise ValueError("log epochs must increase")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    @property
    def final(self) -> LogRow:
        return self.rows[-1]

    def write_csv(self, path, timing: bool = False) -> None:
        """RFC 4180 CSV with LF endings.

        The ``seconds`` column is left empty unless ``timing`` is set, so
        repeated runs produce byte-identical files.
        """
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RUNLOG_HEADER)
            for r in self.rows:
                lb = r.loss
                w.writerow(
                    [
                        r.epoch,
                        _fmt(lb.total),
                        _fmt(lb.residual_term),
                        _fmt(lb.boundary_term),
                        _fmt(lb.initial_term),
                        _fmt(lb.observation_term),
                        _fmt(r.rel_l2),
                        _fmt(r.coefficient),
                        f"{r.seconds:.6f}" if timing else "",
                    ]
                )


def evaluation_grid(domain: SpaceTimeDomain, n: int = 100) -> np.ndarray:
    """n equispaced x over the domain at t = t_min."""
    x = np.linspace(domain.x_min, domain.x_max, n)
    return np.stack([x, np.full(n, domain.t_min)], axis=1)


def evaluate_model(model: NetworkParams | Callable, grid) -> tuple[np.ndarray, float]:
    """Predictions on ``grid`` rows (x, t) and the relative L2 error against the exact solution."""
    grid = np.asarray(grid, dtype=np.float64).reshape(-1, 2)
    if len(grid) == 0:
        raise ValueError("evaluation grid is empty")
    x, t = grid[:, 0], grid[:, 1]
    pred = forward(model, x, t) if isinstance(model, NetworkParams) else np.asarray(model(x, t), dtype=np.float64)
    exact = exact_solution(x, t)
    return pred, float(np.linalg.norm(pred - exact) / np.linalg.norm(exact))


def make_collocation(config: TrainConfig) -> CollocationSet:
    d, c, mode, seed = config.domain, config.counts, config.sampling_mode, config.seed
    kw = {}
    if c.n_interior:
        kw["interior"] = sample_interior(d, c.n_interior, seed, mode)
    if c.n_boundary:
        kw["boundary"] = sample_boundary(d, c.n_boundary, seed, mode)
    if c.n_initial:
        kw["initial"] = sample_initial(d, c.n_initial, seed, mode)
    if c.obs_nx and c.obs_nt:
        kw["observations"] = make_observation_grid(d, c.obs_nx, c.obs_nt, exact_solution)
    return CollocationSet(**kw)


@dataclass
class Checkpoint:
    epoch: int
    params: NetworkParams
    coefficient: float | None
    optimizer_kind: str
    adam: AdamState | None
    config_hash: str

    def save(self, path) -> None:
        doc = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config_hash": self.config_hash,
            "epoch": self.epoch,
            "layer_sizes": list(self.params.layer_sizes),
            "activation": self.params.activation,
            "output_linear": self.params.output_linear,
            "params": [float(v) for v in self.params.flatten()],
            "coefficient": None if self.coefficient is None else float(self.coefficient),
            "optimizer": {"kind": self.optimizer_kind},
        }
        if self.adam is not None:
            doc["optimizer"].update(
                step_count=self.adam.step_count,
                first_moment=[float(v) for v in self.adam.first_moment],
                second_moment=[float(v) for v in self.adam.second_moment],
            )
        Path(path).write_text(json.dumps(doc, indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "Checkpoint":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a checkpoint file")
        if doc.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
        params = from_flat(doc["layer_sizes"], doc["params"], doc["activation"], doc["output_linear"])
        opt = doc["optimizer"]
        adam = None
        if opt["kind"] == "adam":
            adam = AdamState(
                np.array(opt["first_moment"], dtype=np.float64),
                np.array(opt["second_moment"], dtype=np.float64),
                int(opt["step_count"]),
            )
        return cls(int(doc["epoch"]), params, doc["coefficient"], opt["kind"], adam, doc["config_hash"])


@dataclass
class TrainResult:
    params: NetworkParams
    coefficient: float | None
    log: RunLog
    coefficient_trajectory: list[tuple[int, float]]
    checkpoint: Checkpoint


def run_training(
    config: TrainConfig,
    resume: Checkpoint | None = None,
    progress: Callable[[LogRow], None] | None = None,
) -> TrainResult:
    """Full-batch training; one epoch is one optimizer step over every point set.

    Log rows are taken at the starting epoch, every ``log_every`` epochs and
    at the final epoch; each row describes the parameters *before* that
    epoch's step.
    """
    colloc = make_collocation(config)
    arch = config.architecture
    trainable = config.residual.trainable
    if resume is None:
        params = init_network(arch.layer_sizes, config.init, config.seed, arch.activation, arch.output_linear)
        coefficient = config.residual.coefficient if trainable else None
        n = params.n_params + (1 if trainable else 0)
        opt = Optimizer(config.optimizer, n)
        start = 0
    else:
        if resume.config_hash != problem_hash(config):
            raise ValueError("checkpoint was produced by a different problem configuration")
        params, coefficient, start = resume.params.copy(), resume.coefficient, resume.epoch
        n = params.n_params + (1 if trainable else 0)
        state = None
        if resume.adam is not None:
            state = AdamState(resume.adam.first_moment.copy(), resume.adam.second_moment.copy(), resume.adam.step_count)
        opt = Optimizer(config.optimizer, n, state)
    if start > config.epochs:
        raise ValueError(f"checkpoint epoch {start} is past the configured {config.epochs} epochs")

    loss = build_loss(params, config.residual, config.conditions, colloc, config.weights)
    grid = evaluation_grid(config.domain)
    n_net = params.n_params
    flat = params.flatten()
    if trainable:
        flat = np.append(flat, coefficient)

    log = RunLog()
    trajectory: list[tuple[int, float]] = []
    t0 = time.perf_counter()
    for epoch in range(start, config.epochs + 1):
        params = params.with_flat(flat[:n_net])
        coefficient = float(flat[n_net]) if trainable else None
        try:
            ev = loss.evaluate(params, coefficient)
        except NonFiniteError as exc:
            raise TrainingError(epoch, exc) from exc
        last = epoch == config.epochs
        if epoch == start or epoch % config.log_every == 0 or last:
            _, err = evaluate_model(params, grid)
            row = LogRow(epoch, loss.breakdown(ev), err, coefficient, time.perf_counter() - t0)
            log.append(row)
            if progress is not None:
                progress(row)
        if trainable and (epoch == start or epoch % config.coefficient_log_every == 0 or last):
            trajectory.append((epoch, coefficient))
        if last:
            break
        try:
            g_net, g_c = loss_gradient(loss, ev)
        except NonFiniteError as exc:
            raise TrainingError(epoch, exc) from exc
        grads = np.append(g_net, g_c) if trainable else g_net
        flat = opt.step(flat, grads)
        if not np.all(np.isfinite(flat)):
            raise TrainingError(epoch, ArithmeticError("non-finite parameters after update"))

    ckpt = Checkpoint(
        config.epochs, params, coefficient, config.optimizer.kind, opt.state, problem_hash(config)
    )
    return TrainResult(params, coefficient, log, trajectory, ckpt)


def train_forward(config: TrainConfig, resume: Checkpoint | None = None) -> tuple[NetworkParams, RunLog]:
    if config.residual.trainable:
        raise ValueError("train_forward needs a fixed coefficient")
    res = run_training(config, resume)
    return res.params, res.log


def train_inverse(
    config: TrainConfig, resume: Checkpoint | None = None
) -> tuple[NetworkParams, list[tuple[int, float]], RunLog]:
    if not config.residual.trainable:
        raise ValueError("train_inverse needs a trainable coefficient")
    res = run_training(config, resume)
    return res.params, res.coefficient_trajectory, res.log


# -- hand-calculation table -------------------------------------------------

TABLE_POINT = (0.1, 0.1)
TABLE_RATES = {"literal": 0.05, "standard": 0.001}
TABLE_COLUMNS = ("loop", "w1", "w2", "w3", "w4", "w5", "w6", "b1", "b2", "b3", "y_hat", "loss")
# first row of the reference hand-calculation table
REFERENCE_ROW0 = {"w": 0.5, "b": 0.0, "y_hat": 0.525, "loss": 0.146}

# flat index of each named weight: W0 = [[w1, w3], [w2, w4]], b0 = [b1, b2], W1 = [[w5, w6]], b1 = [b3]
_NAMED = {"w1": 0, "w3": 1, "w2": 2, "w4": 3, "b1": 4, "b2": 5, "w5": 6, "w6": 7, "b3": 8}


def table_scenario() -> tuple[NetworkParams, CollocationSet, LossWeights]:
    params = init_network((2, 2, 1), InitScheme("constant", 0.5, 0.0), 0, "sigmoid", output_linear=True)
    x, t = TABLE_POINT
    colloc = CollocationSet(interior=[[x, t]], initial=[[x, 0.0]])
    return params, colloc, LossWeights(w_f=1.0, w_b=0.0, w_i=1.0, w_obs=0.0)


def _literal_update(flat: np.ndarray, grad: np.ndarray, eta: float) -> np.ndarray:
    """The printed rules: ascend, with input / hidden-activation factors on the weights."""
    x, t = TABLE_POINT
    p = {k: flat[i] for k, i in _NAMED.items()}
    g = {k: grad[i] for k, i in _NAMED.items()}
    f1 = float(sigmoid(p["w1"] * x + p["w3"] * t + p["b1"]))
    f2 = float(sigmoid(p["w2"] * x + p["w4"] * t + p["b2"]))
    new = {
        "w1": p["w1"] + eta * g["w1"] * x,
        "w2": p["w2"] + eta * g["w2"] * x,
        "w3": p["w3"] + eta * g["w3"] * x,
        "w4": p["w4"] + eta * g["w4"] * x,
        "b1": p["b1"] + eta * g["b1"],
        "b2": p["b2"] + eta * g["b2"],
        "w5": p["w5"] + eta * g["w5"] * f1,
        "w6": p["w6"] + eta * g["w6"] * f2,
        "b3": p["b3"] + eta * g["b3"],
    }
    out = np.empty_like(flat)
    for k, i in _NAMED.items():
        out[i] = new[k]
    return out


def replicate_manual_table(mode: str = "literal", loops: int = 5) -> list[dict]:
    """Replay the 5-loop hand calculation for the [2, 2, 1] network at (0.1, 0.1).

    ``literal`` applies the printed update rules verbatim with
    eta = 0.05; ``standard`` applies plain SGD with eta = 0.001.
    """
    if mode not in TABLE_RATES:
        raise ValueError(f"unknown table mode {mode!r}")
    eta = TABLE_RATES[mode]
    params, colloc, weights = table_scenario()
    loss = build_loss(params, ResidualSpec.fixed(3.0), ConditionSpec(), colloc, weights)
    flat = params.flatten()
    rows = []
    for loop in range(loops + 1):
        params = params.with_flat(flat)
        ev = loss.evaluate(params)
        row = {"loop": loop}
        for k in ("w1", "w2", "w3", "w4", "w5", "w6", "b1", "b2", "b3"):
            row[k] = float(flat[_NAMED[k]])
        row["y_hat"] = forward(params, *TABLE_POINT)
        row["loss"] = loss.breakdown(ev).total
        rows.append(row)
        if loop == loops:
            break
        grad, _ = loss_gradient(loss, ev)
        flat = _literal_update(flat, grad, eta) if mode == "literal" else sgd_step(flat, grad, eta)
    return rows
