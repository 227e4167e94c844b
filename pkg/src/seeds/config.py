"""Flat ``key=value`` run configuration.

Files are UTF-8, one ``key=value`` per line, ``#`` starts a comment.
List values are comma separated.
"""

from dataclasses import dataclass, fields
from pathlib import Path

from .network import ScoreNetConfig

__all__ = ["RunConfig", "parse_key_values", "load_config", "format_config"]


def parse_key_values(text):
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _split(v):
    return tuple(x.strip() for x in v.split(",") if x.strip())


@dataclass
class RunConfig:
    """Task, training and model settings for the ``train``/``sample`` commands."""

    task: str = "gee"
    lead: int = 1
    K: int = 2
    kprime: int = 0
    N: int = 512
    steps: int = 2000
    batch: int = 32
    sde_steps: int = 256
    lr: float = 3e-4
    warmup: float = 0.01
    clip: float = 1.0
    decay: str = "cosine"
    ema: float = 0.0
    weighting: str = "unit"
    seed: int = 0
    holdout: int = 0
    C: int = 8
    P: int = 8
    D: int = 64
    layers: tuple = (2, 2, 2)
    heads: int = 0
    fields: tuple = ()
    levels: tuple = ()
    data: str = ""
    out: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.task not in ("gee", "gpp"):
            raise ValueError(f"task must be 'gee' or 'gpp', got {self.task!r}")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.task == "gpp" and self.kprime < 1:
            raise ValueError("post-processing needs kprime >= 1")
        if self.kprime < 0 or self.N < 1 or self.steps < 0 or self.batch < 1:
            raise ValueError("kprime >= 0, N >= 1, steps >= 0 and batch >= 1 required")
        if self.holdout < 0:
            raise ValueError("holdout must be non-negative")
        if self.decay not in ("cosine", "none"):
            raise ValueError(f"decay must be 'cosine' or 'none', got {self.decay!r}")
        if not 0.0 <= self.ema < 1.0:
            raise ValueError("ema must lie in [0, 1)")
        if self.weighting not in ("unit", "edm"):
            raise ValueError(f"weighting must be 'unit' or 'edm', got {self.weighting!r}")
        if self.sde_steps < 1:
            raise ValueError("sde_steps must be at least 1")
        if self.data and not Path(self.data).exists():
            raise ValueError(f"data path {self.data!r} does not exist")

    def model_config(self, n_fields):
        flds = self.fields or tuple(f"field{i}" for i in range(n_fields))
        lvls = self.levels or ("surface",) * len(flds)
        if len(flds) != n_fields:
            raise ValueError(f"config lists {len(flds)} fields, data has {n_fields}")
        return ScoreNetConfig(
            C=self.C,
            P=self.P,
            D=self.D,
            layers=self.layers,
            heads=self.heads or None,
            fields=flds,
            levels=lvls,
        )


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name, value):
    kind = _TYPES[name]
    if kind is tuple:
        items = _split(value)
        return tuple(int(x) for x in items) if name == "layers" else items
    if kind is int:
        return int(value)
    if kind is float:
        return float(value)
    return value


def load_config(path=None, **overrides):
    """Build a :class:`RunConfig` from an optional file plus keyword overrides."""
    values = {}
    if path:
        for k, v in parse_key_values(Path(path).read_text(encoding="utf-8")).items():
            if k not in _TYPES:
                raise ValueError(f"unknown config key {k!r}")
            values[k] = _coerce(k, v)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def format_config(cfg):
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name}={','.join(map(str, v)) if isinstance(v, tuple) else v}")
    return "\n".join(lines) + "\n"
