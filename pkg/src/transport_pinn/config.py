"""Run configuration: dataclasses, strict JSON round-trip and built-in presets."""

from __future__ import annotations

import copy
import hashlib
import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .loss import LossWeights
from .network import InitScheme, validate_layer_sizes
from .optim import OptimizerConfig
from .sampling import MODES, SpaceTimeDomain
from .transport import ConditionSpec, ResidualSpec


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.message = message
        self.line = line
        self.source = source
        where = ""
        if source:
            where = f"{source}:{line}: " if line else f"{source}: "
        elif line:
            where = f"line {line}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class Architecture:
    layer_sizes: tuple[int, ...] = (2, 64, 64, 1)
    activation: str = "sigmoid"
    output_linear: bool = True

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))
        validate_layer_sizes(self.layer_sizes)
        if self.activation not in ("sigmoid", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class Counts:
    n_interior: int = 40
    n_boundary: int = 20
    n_initial: int = 10
    obs_nx: int = 0
    obs_nt: int = 0

    def __post_init__(self):
        for k in ("n_interior", "n_boundary", "n_initial", "obs_nx", "obs_nt"):
            if int(getattr(self, k)) < 0:
                raise ValueError(f"{k} must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    architecture: Architecture = field(default_factory=Architecture)
    init: InitScheme = field(default_factory=InitScheme)
    seed: int = 1
    domain: SpaceTimeDomain = field(default_factory=SpaceTimeDomain)
    counts: Counts = field(default_factory=Counts)
    sampling_mode: str = "uniform_random"
    residual: ResidualSpec = field(default_factory=ResidualSpec)
    conditions: ConditionSpec = field(default_factory=ConditionSpec)
    weights: LossWeights = field(default_factory=lambda: LossWeights(w_obs=0.0))
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    epochs: int = 5000
    log_every: int = 100
    coefficient_log_every: int = 100

    def __post_init__(self):
        if self.sampling_mode not in MODES:
            raise ValueError(f"unknown sampling_mode {self.sampling_mode!r}")
        if int(self.epochs) < 1:
            raise ValueError("epochs must be >= 1")
        for k in ("log_every", "coefficient_log_every"):
            if int(getattr(self, k)) < 1:
                raise ValueError(f"{k} must be >= 1")
        c, w = self.counts, self.weights
        if self.residual.trainable and (c.obs_nx < 1 or c.obs_nt < 1):
            raise ValueError(
                f"observation grid obs_nx x obs_nt must be at least 1x1 when the coefficient is trainable, got {c.obs_nx}x{c.obs_nt}"
            )
        pairs = (
            ("n_interior", c.n_interior, "w_f", w.w_f),
            ("n_boundary", c.n_boundary, "w_b", w.w_b),
            ("n_initial", c.n_initial, "w_i", w.w_i),
            ("obs_nx*obs_nt", c.obs_nx * c.obs_nt, "w_obs", w.w_obs),
        )
        for cname, n, wname, wv in pairs:
            if wv > 0 and n < 1:
                raise ValueError(f"{wname} > 0 needs {cname} >= 1")

    @property
    def inverse(self) -> bool:
        return self.residual.trainable

    def with_overrides(self, seed=None, epochs=None, learning_rate=None, layer_sizes=None) -> "TrainConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if epochs is not None:
            cfg = replace(cfg, epochs=int(epochs))
        if learning_rate is not None:
            cfg = replace(cfg, optimizer=replace(cfg.optimizer, learning_rate=float(learning_rate)))
        if layer_sizes is not None:
            cfg = replace(cfg, architecture=replace(cfg.architecture, layer_sizes=tuple(layer_sizes)))
        return cfg


_SECTIONS = {
    "architecture": Architecture,
    "init": InitScheme,
    "domain": SpaceTimeDomain,
    "counts": Counts,
    "residual": ResidualSpec,
    "conditions": ConditionSpec,
    "weights": LossWeights,
    "optimizer": OptimizerConfig,
}
_SCALARS = {"seed": int, "sampling_mode": str, "epochs": int, "log_every": int, "coefficient_log_every": int}
_SECTION_FIELDS = {
    "architecture": {"layer_sizes": list, "activation": str, "output_linear": bool},
    "init": {"kind": str, "constant_weight": float, "constant_bias": float},
    "domain": {"x_min": float, "x_max": float, "t_min": float, "t_max": float},
    "counts": {"n_interior": int, "n_boundary": int, "n_initial": int, "obs_nx": int, "obs_nt": int},
    "residual": {"coefficient": float, "trainable": bool},
    "conditions": {"boundary": str},
    "weights": {"w_f": float, "w_b": float, "w_i": float, "w_obs": float},
    "optimizer": {"kind": str, "learning_rate": float, "beta1": float, "beta2": float, "epsilon": float},
}


def to_dict(cfg: TrainConfig) -> dict:
    out = {}
    for name in _SECTIONS:
        section = getattr(cfg, name)
        out[name] = {k: getattr(section, k) for k in _SECTION_FIELDS[name]}
    out["architecture"]["layer_sizes"] = list(cfg.architecture.layer_sizes)
    for k in _SCALARS:
        out[k] = getattr(cfg, k)
    return out


def dumps(cfg: TrainConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2, sort_keys=False) + "\n"


def problem_hash(cfg: TrainConfig) -> str:
    """Digest of everything that shapes the optimization path (cadences and epoch count excluded)."""
    d = to_dict(cfg)
    for k in ("epochs", "log_every", "coefficient_log_every"):
        d.pop(k)
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    pat = re.compile(r'"' + re.escape(key) + r'"\s*:')
    for i, line in enumerate(text.splitlines(), 1):
        if pat.search(line):
            return i
    return None


def _coerce(value, kind, where, text):
    ok = {
        int: isinstance(value, int) and not isinstance(value, bool),
        float: isinstance(value, (int, float)) and not isinstance(value, bool),
        bool: isinstance(value, bool),
        str: isinstance(value, str),
        list: isinstance(value, list),
    }[kind]
    if not ok:
        raise ConfigError(f"{where}: expected {kind.__name__}, got {value!r}", _line_of(text, where.split(".")[-1]))
    if kind is float and not math.isfinite(float(value)):
        raise ConfigError(f"{where}: must be finite", _line_of(text, where.split(".")[-1]))
    return float(value) if kind is float else value


def from_dict(data: dict, text: str | None = None, base: TrainConfig | None = None) -> TrainConfig:
    """Build a config from parsed JSON; missing keys fall back to ``base`` (default: TrainConfig())."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", 1 if text else None)
    merged = to_dict(base or TrainConfig())
    for key, value in data.items():
        if key in _SECTION_FIELDS:
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected an object", _line_of(text, key))
            for sub, sv in value.items():
                if sub not in _SECTION_FIELDS[key]:
                    raise ConfigError(f"unknown key {key}.{sub}", _line_of(text, sub))
                merged[key][sub] = _coerce(sv, _SECTION_FIELDS[key][sub], f"{key}.{sub}", text)
        elif key in _SCALARS:
            merged[key] = _coerce(value, _SCALARS[key], key, text)
        else:
            raise ConfigError(f"unknown key {key}", _line_of(text, key))

    built = {}
    for name, cls in _SECTIONS.items():
        try:
            built[name] = cls(**merged[name])
        except (ValueError, TypeError) as exc:
            first = next(iter(data.get(name, {}) or {}), name)
            raise ConfigError(f"{name}: {exc}", _line_of(text, first) or _line_of(text, name)) from None
    try:
        return TrainConfig(**built, **{k: merged[k] for k in _SCALARS})
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), _line_of_first_named(text, str(exc))) from None


def _line_of_first_named(text: str | None, message: str) -> int | None:
    """Line of the first config key that a cross-field error message mentions."""
    keys = list(_SCALARS) + [k for fields in _SECTION_FIELDS.values() for k in fields]
    hits = []
    for k in keys:
        m = re.search(r"\b" + re.escape(k) + r"\b", message)
        line = _line_of(text, k) if m else None
        if line is not None:
            hits.append((m.start(), line))
    if not hits:
        return None
    return min(hits)[1]


def loads(text: str, source: str | None = None) -> TrainConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, exc.lineno, source) from None
    try:
        return from_dict(data, text)
    except ConfigError as exc:
        raise ConfigError(exc.message, exc.line, source) from None


def load(path) -> TrainConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return loads(path.read_text(), str(path))


_FORWARD_SMALL = TrainConfig(
    architecture=Architecture((2, 64, 64, 1), "sigmoid", True),
    counts=Counts(40, 20, 10, 0, 0),
    sampling_mode="equispaced_grid",
    optimizer=OptimizerConfig("adam", 0.001),
    weights=LossWeights(1.0, 1.0, 1.0, 0.0),
    epochs=5000,
    log_every=100,
)

PRESETS: dict[str, TrainConfig] = {
    "forward-small": _FORWARD_SMALL,
    "forward-tutorial": replace(_FORWARD_SMALL, counts=Counts(8190, 4094, 4094, 0, 0)),
    "inverse-tutorial": replace(
        _FORWARD_SMALL,
        counts=Counts(40, 20, 10, 10, 10),
        residual=ResidualSpec.unknown(0.0),
        conditions=ConditionSpec("dirichlet_exact"),
        weights=LossWeights(1.0, 1.0, 1.0, 1.0),
        optimizer=OptimizerConfig("adam", 0.01),
        epochs=20000,
        coefficient_log_every=100,
    ),
    "table-replication": TrainConfig(
        architecture=Architecture((2, 2, 1), "sigmoid", True),
        init=InitScheme("constant", 0.5, 0.0),
        counts=Counts(1, 0, 1, 0, 0),
        sampling_mode="equispaced_grid",
        weights=LossWeights(1.0, 0.0, 1.0, 0.0),
        optimizer=OptimizerConfig("sgd", 0.001),
        epochs=5,
        log_every=1,
    ),
}


def resolve(spec: str) -> TrainConfig:
    """A preset name or a path to a JSON file."""
    if spec in PRESETS and not Path(spec).exists():
        return copy.deepcopy(PRESETS[spec])
    return load(spec)
