"""Flat key=value run configuration.

Grammar: one ``key = value`` pair per line; blank lines and ``#`` comments
ignored. Keys are typed below; unknown keys are rejected. ``widths`` is a
comma-separated integer list.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError

_TASKS = {"regression_I", "regression_II", "regression_III", "moons", "mnist", "pinn"}
_MODELS = {"kan", "ukan", "mlp"}
_OPTIMIZERS = {"sgd", "adam"}


@dataclass
class RunConfig:
    task: str = "regression_II"
    model: str = "kan"
    widths: list[int] = field(default_factory=lambda: [2, 5, 1])
    degree: int = 3
    # bounded-grid settings
    g_min: float = -1.0
    g_max: float = 1.0
    grid_size: int = 8
    # unbounded settings
    delta_g: float = 1.0
    d_pe: int = 8
    d_femb: int = 8
    d_hidden: int = 0       # 0 = 2*(d_pe + d_femb)
    # optimization
    optimizer: str = "adam"
    lr: float = 0.01
    weight_decay: float = 0.0
    decay_rate: float = 1.0
    min_lr: float = 0.0
    epochs: int = 1000
    batch_size: int = 0     # 0 = full batch
    seed: int = 0
    eval_every: int = 100
    # data
    n_train: int = 0        # 0 = task default
    n_val: int = 0
    noise_sd: float = 0.1
    mnist_dir: str = ""
    # pinn
    growth_rate: float = 1.0
    t_lo: float = -5.0
    t_hi: float = 5.0
    n_collocation: int = 128
    # outputs
    out_dir: str = "."

    def validate(self) -> "RunConfig":
        if self.task not in _TASKS:
            raise ConfigError(f"task: unknown value {self.task!r}, expected one of {sorted(_TASKS)}")
        if self.model not in _MODELS:
            raise ConfigError(f"model: unknown value {self.model!r}, expected one of {sorted(_MODELS)}")
        if self.optimizer not in _OPTIMIZERS:
            raise ConfigError(f"optimizer: unknown value {self.optimizer!r}")
        if len(self.widths) < 2 or any(w < 1 for w in self.widths):
            raise ConfigError(f"widths: need >= 2 positive extents, got {self.widths}")
        if self.degree < 0 or self.degree > 10:
            raise ConfigError(f"degree: must be in [0, 10], got {self.degree}")
        if self.g_min >= self.g_max:
            raise ConfigError(f"g_min must be < g_max, got [{self.g_min}, {self.g_max}]")
        if self.grid_size < 1:
            raise ConfigError(f"grid_size: must be >= 1, got {self.grid_size}")
        if self.delta_g <= 0:
            raise ConfigError(f"delta_g: must be positive, got {self.delta_g}")
        if self.d_pe % 2 != 0 or self.d_pe < 2:
            raise ConfigError(f"d_pe: must be a positive even number, got {self.d_pe}")
        if self.lr <= 0:
            raise ConfigError(f"lr: must be positive, got {self.lr}")
        if not (0 < self.decay_rate <= 1):
            raise ConfigError(f"decay_rate: must be in (0, 1], got {self.decay_rate}")
        if self.epochs < 0:
            raise ConfigError(f"epochs: must be >= 0, got {self.epochs}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every: must be >= 1, got {self.eval_every}")
        if self.task == "mnist" and not self.mnist_dir:
            raise ConfigError("mnist_dir: required for the mnist task")
        return self


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _parse_value(key: str, raw: str):
    f = _FIELDS[key]
    raw = raw.strip()
    try:
        if f.name == "widths":
            return [int(tok) for tok in raw.replace(",", " ").split()]
        if f.type == "int":
            return int(raw)
        if f.type == "float":
            return float(raw)
        return raw
    except ValueError as e:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from e


def parse_config_text(text: str) -> RunConfig:
    cfg = RunConfig()
    updates = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in updates:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        updates[key] = _parse_value(key, raw)
    return replace(cfg, **updates).validate()


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def config_to_text(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if f.name == "widths":
            v = ",".join(str(w) for w in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
