"""Run configuration: a YAML file with nested sections, overridable by CLI flags.

Example::

    command: bench
    manifold: stiefel
    seed: 3
    iters: 20000
    problem: {name: procrustes, rows: 4, cols: 4}
    schedule: {kind: inverse_time, alpha0: 0.05, lambda: 0.001}
    optimizer: {theta_mu: 0.5, theta_e: 0.5}

Keys left out take defaults; for ``bench``/``compare`` the optimizer and
schedule defaults are the tuned values of the chosen problem.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .bench.harness import DEFAULT_HYPER
from .bench.problems import DEFAULT_PROBLEM
from .errors import ConfigError
from .manifolds import Family, ManifoldSpec
from .optim import Hyperparams, ScheduleSpec

COMMANDS = ("check", "bench", "train", "compare")
DATA_FORMATS = ("synthetic", "csv_labeled", "idx_pair")
PROBLEM_FAMILY = {"rayleigh": Family.SPHERE, "oblique_diag": Family.OBLIQUE,
                  "procrustes": Family.STIEFEL}
PROBLEM_SHAPE = {"rayleigh": (5, 1), "oblique_diag": (3, 2), "procrustes": (4, 4)}
# defaults outside bench/compare (the CNN path)
TRAIN_HYPER = Hyperparams(0.9, 1.0, ScheduleSpec("inverse_time", 0.1, 0.01))

# allowed keys; a nested dict marks a section
SCHEMA = {
    "command": None, "manifold": None, "seed": None, "iters": None, "out": None,
    "deterministic": None,
    "optimizer": {"theta_mu": None, "theta_e": None, "clip": None, "use_exp_map": None},
    "schedule": {"kind": None, "alpha0": None, "lambda": None, "drop_every": None,
                 "drop_factor": None},
    "problem": {"name": None, "rows": None, "cols": None},
    "network": {"channels": None, "kernel": None, "activation": None, "mean_only_bn": None,
                "dense_manifold": None},
    "data": {"format": None, "path": None, "labels_path": None, "samples": None,
             "batch_size": None, "epochs": None},
}


@dataclass(frozen=True)
class ProblemConfig:
    name: str = "rayleigh"
    rows: int = 5
    cols: int = 1


@dataclass(frozen=True)
class NetworkConfig:
    channels: tuple = (4, 4)
    kernel: int = 3
    activation: str = "tanh"
    mean_only_bn: bool = False
    dense_manifold: str = "same"  # "same" follows the conv policy


@dataclass(frozen=True)
class DataConfig:
    format: str = "synthetic"
    path: str | None = None
    labels_path: str | None = None
    samples: int = 256
    batch_size: int = 16
    epochs: int = 50


@dataclass(frozen=True)
class RunConfig:
    command: str = "check"
    manifold: str = "sphere"
    seed: int = 0
    iters: int = 20000
    out: str = "runs"
    deterministic: bool = True
    hyper: Hyperparams = TRAIN_HYPER
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    data: DataConfig = field(default_factory=DataConfig)

    @property
    def family(self):
        return None if self.manifold == "none" else Family.parse(self.manifold)

    def to_dict(self):
        h, s = self.hyper, self.hyper.schedule
        return {
            "command": self.command,
            "manifold": self.manifold,
            "seed": self.seed,
            "iters": self.iters,
            "out": self.out,
            "deterministic": self.deterministic,
            "optimizer": {"theta_mu": h.theta_mu, "theta_e": h.theta_E, "clip": h.grad_clip,
                          "use_exp_map": h.use_exp_map},
            "schedule": {"kind": s.kind.value, "alpha0": s.alpha0, "lambda": s.lam,
                         "drop_every": s.drop_every, "drop_factor": s.drop_factor},
            "problem": dataclasses.asdict(self.problem),
            "network": {**dataclasses.asdict(self.network), "channels": list(self.network.channels)},
            "data": dataclasses.asdict(self.data),
        }

    def dump(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _check_keys(raw, schema, prefix=""):
    if not isinstance(raw, dict):
        raise ConfigError("expected a mapping", key=prefix.rstrip(".") or "<root>")
    for key, val in raw.items():
        path = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError("unknown key", key=path)
        if schema[key] is not None:
            _check_keys(val if val is not None else {}, schema[key], path + ".")


def _get(raw, dotted):
    node = raw
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return None
        node = node[part]
    return node


def _coerce(value, kind, key):
    if value is None:
        return None
    try:
        if kind is bool:
            if isinstance(value, str):
                low = value.strip().lower()
                if low in ("true", "yes", "1", "on"):
                    return True
                if low in ("false", "no", "0", "off"):
                    return False
                raise ValueError(value)
            return bool(value)
        if kind is int:
            f = float(value)
            if f != int(f):
                raise ValueError(value)
            return int(f)
        if kind is float:
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"cannot read {value!r} as {kind.__name__}", key=key) from None


def _pick(raw, key, kind, default):
    v = _coerce(_get(raw, key), kind, key)
    return default if v is None else v


def load_raw(path):
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}", key=str(path)) from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config file: {exc}", key=str(path)) from None
    return raw or {}


def _set_dotted(raw, dotted, value):
    node = raw
    parts = dotted.split(".")
    for part in parts[:-1]:
        if node.get(part) is None:
            node[part] = {}
        node = node[part]
    node[parts[-1]] = value


def parse_config(path=None, overrides=None) -> RunConfig:
    """Read ``path`` (may be None), apply dotted-key ``overrides`` and validate."""
    raw = load_raw(path)
    _check_keys(raw, SCHEMA)
    for key, val in (overrides or {}).items():
        if val is not None:
            _set_dotted(raw, key, val)
    _check_keys(raw, SCHEMA)
    return build_config(raw)


def build_config(raw) -> RunConfig:
    command = _pick(raw, "command", str, "check")
    if command not in COMMANDS:
        raise ConfigError(f"must be one of {COMMANDS}", key="command")

    manifold = _get(raw, "manifold")
    problem_name = _pick(raw, "problem.name", str, None)
    if manifold is not None:
        manifold = str(manifold).lower()
        if manifold not in ("none", "unconstrained"):
            manifold = Family.parse(manifold).value
        else:
            manifold = "none"

    if command in ("bench", "compare"):
        if manifold == "none":
            raise ConfigError("benchmarks need a manifold", key="manifold")
        if problem_name is None:
            problem_name = DEFAULT_PROBLEM[Family.parse(manifold)] if manifold else "rayleigh"
        if problem_name not in PROBLEM_FAMILY:
            raise ConfigError(f"unknown problem {problem_name!r}", key="problem.name")
        if manifold is None:
            manifold = PROBLEM_FAMILY[problem_name].value
        allowed = {PROBLEM_FAMILY[problem_name].value}
        if problem_name == "procrustes":
            allowed.add(Family.SPECIAL_ORTHOGONAL.value)
        if manifold not in allowed:
            raise ConfigError(f"problem {problem_name} runs on {sorted(allowed)}, not {manifold}",
                              key="manifold")
    else:
        problem_name = problem_name or "rayleigh"
        manifold = manifold or "sphere"

    rows0, cols0 = PROBLEM_SHAPE[problem_name] if problem_name in PROBLEM_SHAPE else (5, 1)
    problem = ProblemConfig(problem_name, _pick(raw, "problem.rows", int, rows0),
                            _pick(raw, "problem.cols", int, cols0))
    if command in ("bench", "compare"):
        if problem.name == "rayleigh" and problem.cols != 1:
            raise ConfigError("rayleigh works on column vectors (cols = 1)", key="problem.cols")
        try:
            ManifoldSpec(Family.parse(manifold), problem.rows, problem.cols)
        except ConfigError as exc:
            raise ConfigError(str(exc), key="problem") from None

    base = DEFAULT_HYPER.get(problem_name, Hyperparams()) \
        if command in ("bench", "compare") else TRAIN_HYPER
    bs = base.schedule
    schedule = ScheduleSpec(
        _pick(raw, "schedule.kind", str, bs.kind.value),
        _pick(raw, "schedule.alpha0", float, bs.alpha0),
        _pick(raw, "schedule.lambda", float, bs.lam),
        _pick(raw, "schedule.drop_every", int, bs.drop_every),
        _pick(raw, "schedule.drop_factor", float, bs.drop_factor),
    )
    hyper = Hyperparams(
        _pick(raw, "optimizer.theta_mu", float, base.theta_mu),
        _pick(raw, "optimizer.theta_e", float, base.theta_E),
        schedule,
        _pick(raw, "optimizer.clip", float, base.grad_clip),
        _pick(raw, "optimizer.use_exp_map", bool, base.use_exp_map),
    )

    channels = _get(raw, "network.channels")
    if channels is None:
        channels = NetworkConfig.channels
    if not isinstance(channels, (list, tuple)) or not channels:
        raise ConfigError("must be a non-empty list of integers", key="network.channels")
    network = NetworkConfig(
        tuple(_coerce(c, int, "network.channels") for c in channels),
        _pick(raw, "network.kernel", int, NetworkConfig.kernel),
        _pick(raw, "network.activation", str, NetworkConfig.activation).lower(),
        _pick(raw, "network.mean_only_bn", bool, NetworkConfig.mean_only_bn),
        _pick(raw, "network.dense_manifold", str, NetworkConfig.dense_manifold).lower(),
    )
    if network.activation not in ("tanh", "softplus", "relu"):
        raise ConfigError("must be tanh, softplus or relu", key="network.activation")
    if any(c < 1 for c in network.channels) or network.kernel < 1:
        raise ConfigError("channels and kernel must be positive", key="network")
    if network.dense_manifold not in ("same", "none"):
        network = dataclasses.replace(
            network, dense_manifold=Family.parse(network.dense_manifold).value)

    data = DataConfig(
        _pick(raw, "data.format", str, DataConfig.format),
        _pick(raw, "data.path", str, None),
        _pick(raw, "data.labels_path", str, None),
        _pick(raw, "data.samples", int, DataConfig.samples),
        _pick(raw, "data.batch_size", int, DataConfig.batch_size),
        _pick(raw, "data.epochs", int, DataConfig.epochs),
    )
    if data.format not in DATA_FORMATS:
        raise ConfigError(f"must be one of {DATA_FORMATS}", key="data.format")
    if command == "train" and data.format != "synthetic":
        if data.path is None:
            raise ConfigError("a dataset path is required", key="data.path")
        for key in ("path", "labels_path"):
            p = getattr(data, key)
            if p is not None and not Path(p).exists():
                raise ConfigError(f"file {p} does not exist", key=f"data.{key}")
    if data.samples < 1 or data.batch_size < 1 or data.epochs < 1:
        raise ConfigError("samples, batch_size and epochs must be positive", key="data")

    iters = _pick(raw, "iters", int, 20000)
    if iters < 1:
        raise ConfigError("must be >= 1", key="iters")
    return RunConfig(
        command=command,
        manifold=manifold,
        seed=_pick(raw, "seed", int, 0),
        iters=iters,
        out=_pick(raw, "out", str, "runs"),
        deterministic=_pick(raw, "deterministic", bool, True),
        hyper=hyper,
        problem=problem,
        network=network,
        data=data,
    )
