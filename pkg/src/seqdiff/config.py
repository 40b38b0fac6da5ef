"""Training configuration and its `key = value` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass


@dataclass
class TrainConfig:
    """Everything that, together with a dataset and a seed, fixes a training run.

    Defaults follow the reference setup (lr 0.001, horizon 32, dim 128,
    4 blocks / 4 heads, dropout 0.1 block / 0.3 embedding, delta 0.001);
    tests use a smaller desk profile.
    """

    learning_rate: float = 0.001
    epochs: int = 50
    batch_size: int = 1024
    t: int = 32
    delta: float = 0.001
    schedule_kind: str = "truncated-linear"
    schedule_a: float = 0.2
    schedule_b: float = 0.008
    schedule_tau: float = 1.0
    schedule_b_constant: bool = False
    reverse_noise_sqrt: bool = False
    dropout_block: float = 0.1
    dropout_emb: float = 0.3
    max_len: int = 50
    seed: int = 0
    mode: str = "diffusion"  # or "adversarial"
    epsilon_adv: float = 0.5
    gamma_adv: float = 1.0
    dim: int = 128
    blocks: int = 4
    heads: int = 4
    approximator: str = "transformer"  # or "gru"
    lambda_scalar: bool = False
    eval_every: int = 5
    patience: int = 3

    def validate(self) -> "TrainConfig":
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.t < 1:
            raise ValueError("t must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.epsilon_adv < 0:
            raise ValueError("epsilon_adv must be >= 0")
        if self.gamma_adv < 0:
            raise ValueError("gamma_adv must be >= 0")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.dim % 2 != 0:
            raise ValueError("dim must be even (sinusoidal step embedding)")
        if self.dim % self.heads != 0:
            raise ValueError("dim must be divisible by heads")
        if self.mode not in ("diffusion", "adversarial"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.approximator not in ("transformer", "gru"):
            raise ValueError(f"unknown approximator {self.approximator!r}")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        return self


_FIELDS = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _parse_value(name: str, text: str):
    kind = _FIELDS[name]
    if kind == "bool":
        low = text.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"cannot parse boolean {name} = {text!r}")
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text


def parse_config(text: str) -> TrainConfig:
    """Parse `key = value` lines; `#` starts a comment, blanks are skipped."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"config line {lineno}: expected key = value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw.strip())
    return TrainConfig(**values).validate()


def load_config(path) -> TrainConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def format_config(cfg: TrainConfig) -> str:
    lines = []
    for f in dataclasses.fields(TrainConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def config_to_dict(cfg: TrainConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_from_dict(d: dict) -> TrainConfig:
    unknown = set(d) - set(_FIELDS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return TrainConfig(**d).validate()
