"""Run configuration: one flat ``key = value`` file shared by every benchmark."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .evolution.operators import OperatorSettings
from .losses import LossSettings
from .optimizer import AdamSettings


@dataclass
class RunConfig:
    problem: str = "resistors"
    master: str = "auto"  # mastera | masterb | quadcopter | auto (per-problem default)
    popsize: int = 10
    stages: int = 3
    generations: int = 20
    n_newborn: int = 10
    n_tune: int = 100
    n_finetune: int = 50
    budget: int = 90000
    offspring: int = 0  # 0 means 2 * popsize
    theta_a: float = 0.01
    theta_div: float = 1e-3
    reg_knot: float = 0.01
    reg_weight: float = 1e-3
    p_c: float = 0.9
    p_m: float = 0.3
    p_l: float = 0.5
    p_i: float = 0.8
    p_h: float = 0.5
    s_hist: int = 10
    archive_objectives: str = "mem"  # mem | pop: dominance used by the best-so-far archives
    init_bound: float = 0.5
    adam_lr: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    constraint_samples: int = 50
    data_seed: int = 0
    seed: int = 0
    runs: int = 1
    output_dir: str = "runs"

    def __post_init__(self):
        self.validate()

    # -- derived settings --------------------------------------------------

    @property
    def n_offspring(self) -> int:
        return self.offspring if self.offspring > 0 else 2 * self.popsize

    @property
    def adam(self) -> AdamSettings:
        return AdamSettings(self.adam_lr, self.adam_beta1, self.adam_beta2, self.adam_eps)

    @property
    def loss(self) -> LossSettings:
        return LossSettings(theta_div=self.theta_div, reg_knot=self.reg_knot, reg_weight=self.reg_weight)

    @property
    def operators(self) -> OperatorSettings:
        return OperatorSettings(self.p_c, self.p_m, self.p_l, self.p_i, self.p_h, self.init_bound)

    def validate(self):
        for name in ("popsize", "s_hist"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("stages", "generations", "n_newborn", "n_tune", "n_finetune", "budget",
                     "offspring", "constraint_samples", "runs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("p_c", "p_m", "p_l", "p_i", "p_h"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.archive_objectives not in ("pop", "mem"):
            raise ValueError("archive_objectives must be 'pop' or 'mem'")
        if self.theta_a < 0 or self.theta_div < 0 or self.reg_knot <= 0:
            raise ValueError("thresholds must be nonnegative and the knot positive")

    # -- text form ---------------------------------------------------------

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_text(cls, text: str, **overrides) -> "RunConfig":
        values = parse_pairs(text)
        values.update(overrides)
        return cls.from_mapping(values)

    @classmethod
    def from_file(cls, path, **overrides) -> "RunConfig":
        return cls.from_text(Path(path).read_text(), **overrides)

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        unknown = sorted(set(values) - set(types))
        if unknown:
            raise KeyError(f"unknown configuration key(s): {', '.join(unknown)}")
        kwargs = {k: _coerce(k, types[k], v) for k, v in values.items()}
        return cls(**kwargs)


def parse_pairs(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment; blank lines are ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _coerce(key, typ, value):
    if not isinstance(value, str):
        return value
    try:
        if typ in (int, "int"):
            return int(value)
        if typ in (float, "float"):
            return float(value)
    except ValueError:
        raise ValueError(f"{key}: cannot parse {value!r} as {typ}") from None
    return value
