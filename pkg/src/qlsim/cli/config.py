"""Experiment configuration: dataclasses with a JSON round trip and a stable hash."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from ..errors import ParameterError

COMMANDS = ("solve", "solve-precond", "estimate-norm", "bounds", "apps", "grover-lb", "compare")
LAWS = ("log-uniform", "bands", "grover")
BACKENDS = ("matrix", "analytic", "spectral")


class ConfigError(ParameterError):
    """The experiment configuration is malformed or infeasible."""


@dataclass(frozen=True)
class InstanceSpec:
    dimension: int = 8
    law: str = "log-uniform"
    kappa: float = 27.0
    kappa_S: float = 1.0
    seed: int | None = None
    band_counts: tuple | None = None
    marked: int = 0
    count: int = 1


@dataclass(frozen=True)
class AlgorithmParams:
    eps: float = 1e-2
    eps_bm: float | None = None
    eps_gpe: float | None = None
    c: float = 1.001
    mode: str = "exact"
    backend: str = "spectral"
    estimate_factor: float = 1.0
    alpha_p_divisor: float = 50.0
    trials: int = 200


@dataclass(frozen=True)
class SweepSpec:
    kappas: tuple = (3.0, 9.0, 27.0)
    fractions: tuple = (1.0, 0.3, 0.1)
    eps_values: tuple = (1e-2,)
    dimension: int = 6


@dataclass(frozen=True)
class OutputSpec:
    out_dir: str = "results"


@dataclass(frozen=True)
class ExperimentConfig:
    command: str = "solve"
    instance: InstanceSpec = field(default_factory=InstanceSpec)
    params: AlgorithmParams = field(default_factory=AlgorithmParams)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    workers: int = 1

    def __post_init__(self):
        validate(self)

    def to_json(self):
        return _plain(dataclasses.asdict(self))

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict):
            raise ConfigError("configuration must be a JSON object")
        parts = {
            "instance": InstanceSpec,
            "params": AlgorithmParams,
            "sweep": SweepSpec,
            "output": OutputSpec,
        }
        kwargs = {}
        for key, value in obj.items():
            if key in parts:
                kwargs[key] = _build(parts[key], value, key)
            elif key in ("command", "workers"):
                kwargs[key] = value
            else:
                raise ConfigError(f"unknown configuration key {key!r}")
        return cls(**kwargs)

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True, indent=2)

    @classmethod
    def loads(cls, text):
        try:
            return cls.from_json(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"configuration is not valid JSON: {exc}") from exc

    def digest(self):
        """First 12 hex digits of the SHA-256 of the canonical JSON form, output location excluded."""
        body = {k: v for k, v in self.to_json().items() if k != "output"}
        canonical = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]

    def with_overrides(self, **changes):
        """Replace fields addressed as 'section.name' or top-level names."""
        sections = {}
        top = {}
        for key, value in changes.items():
            if value is None:
                continue
            if "." in key:
                section, name = key.split(".", 1)
                sections.setdefault(section, {})[name] = value
            else:
                top[key] = value
        updated = {s: dataclasses.replace(getattr(self, s), **vals) for s, vals in sections.items()}
        return dataclasses.replace(self, **updated, **top)


def _build(cls, value, name):
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(value) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    converted = {k: tuple(v) if isinstance(v, list) else v for k, v in value.items()}
    return cls(**converted)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def validate(cfg: ExperimentConfig):
    if cfg.command not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}")
    inst, par = cfg.instance, cfg.params
    if inst.law not in LAWS:
        raise ConfigError(f"spectrum law must be one of {LAWS}")
    if not isinstance(inst.dimension, int) or inst.dimension < 1:
        raise ConfigError("dimension must be a positive integer")
    if inst.kappa < 1 or inst.kappa_S < 1:
        raise ConfigError("kappa and kappa_S must be at least one")
    if inst.count < 1:
        raise ConfigError("count must be positive")
    if inst.seed is not None and (not isinstance(inst.seed, int) or inst.seed < 0):
        raise ConfigError("seed must be a nonnegative integer")
    if not 0 < par.eps < 1:
        raise ConfigError("eps must lie in (0, 1)")
    if par.backend not in BACKENDS:
        raise ConfigError(f"backend must be one of {BACKENDS}")
    if par.mode not in ("exact", "stochastic"):
        raise ConfigError("mode must be 'exact' or 'stochastic'")
    if par.c < 1:
        raise ConfigError("c must be at least one")
    if par.estimate_factor <= 0 or par.alpha_p_divisor < 1 or par.trials < 1:
        raise ConfigError("estimate_factor must be positive, alpha_p_divisor >= 1, trials >= 1")
    if not isinstance(cfg.workers, int) or cfg.workers < 1:
        raise ConfigError("workers must be a positive integer")
