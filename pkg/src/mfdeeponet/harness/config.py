"""Experiment configuration: JSON files with a versioned schema, plus
bundled presets holding per-benchmark parameter tables."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

SCHEMA_VERSION = 1
MODEL_KINDS = ("sf-data", "mf-data", "sf-pi", "mf-pi", "noncomposite", "lf-data")
BENCHMARKS = ("jump1d", "corr_u_1d", "lin2d", "nonlin2d", "noncomp_1d", "ode_3_1", "burgers", "external")
_PI_BENCHMARKS = ("ode_3_1", "burgers")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str
    benchmark: str
    model: str
    networks: dict
    schedule: list
    steps: int
    data: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)
    activation: str = "tanh"
    staircase: bool = False
    batch: dict = field(default_factory=dict)
    seed: int = 0
    residual_norm: str = "l2"
    probe_grid: dict | None = None
    linear_input: str = "query"
    detach_probes: bool = False
    checkpoint_every: int = 0
    eval_chunk: int = 64
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema version {self.schema_version}")
        if self.benchmark not in BENCHMARKS:
            raise ConfigError(f"unknown benchmark {self.benchmark!r}")
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.model!r}")
        if self.model.endswith("-pi") and self.benchmark not in _PI_BENCHMARKS:
            raise ConfigError(f"{self.model} needs a physics benchmark, not {self.benchmark}")
        if self.model in ("sf-data", "mf-data") and self.benchmark in _PI_BENCHMARKS:
            raise ConfigError(f"{self.benchmark} has no high-fidelity data for {self.model}")
        if self.model == "noncomposite" and self.benchmark != "noncomp_1d":
            raise ConfigError("the non-composite model needs an exact low-fidelity function (noncomp_1d)")
        for k, v in self.weights.items():
            if k not in ("l1", "l2", "l3", "l4", "l5", "l6") or not float(v) >= 0:
                raise ConfigError(f"bad loss weight {k}={v}")
        if len(self.schedule) != 3:
            raise ConfigError("schedule must be (initial, decay steps, decay rate)")
        if int(self.steps) < 0:
            raise ConfigError("steps must be non-negative")
        if self.residual_norm not in ("l2", "l1"):
            raise ConfigError("residual_norm must be l2 or l1")
        if self.linear_input not in ("query", "probes"):
            raise ConfigError("linear_input must be query or probes")
        for key, size in self.networks.items():
            if len(size) != 2 or min(size) < 1:
                raise ConfigError(f"network {key} must be [layers, neurons] with positive entries")
        needed = {"sf-data": ("sf",), "sf-pi": ("sf",), "lf-data": ("lf",),
                  "mf-data": ("lf", "linear", "nonlinear"), "mf-pi": ("lf", "linear", "nonlinear"),
                  "noncomposite": ("linear", "nonlinear")}[self.model]
        missing = [k for k in needed if k not in self.networks]
        if missing:
            raise ConfigError(f"{self.model} needs network sizes for {missing}")
        if self.benchmark == "external":
            for key in ("lf_path", "hf_path", "test_path"):
                if key in self.data and not Path(self.data[key]).exists():
                    raise ConfigError(f"dataset {self.data[key]!r} does not exist")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        d = copy.deepcopy(self.to_dict())
        d.update(changes)
        return ExperimentConfig.from_dict(d)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        return cls(**copy.deepcopy(d))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        raw = json.loads(Path(path).read_text())
        if "variants" in raw:
            return resolve_preset(raw, None)
        return cls.from_dict(raw)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def preset_names() -> list:
    return sorted(p.name[:-5] for p in resources.files("mfdeeponet.presets").iterdir() if p.name.endswith(".json"))


def load_preset_raw(name: str) -> dict:
    res = resources.files("mfdeeponet.presets") / f"{name}.json"
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {preset_names()}")
    return json.loads(res.read_text())


def resolve_preset(raw: dict, variant: str | None) -> ExperimentConfig:
    variant = variant or raw.get("default_variant")
    variants = raw["variants"]
    if variant not in variants:
        raise ConfigError(f"preset {raw.get('name')!r} has no variant {variant!r}; choose from {sorted(variants)}")
    d = _merge(raw.get("common", {}), variants[variant])
    d.setdefault("name", f"{raw.get('name', 'preset')}-{variant}")
    return ExperimentConfig.from_dict(d)


def load_preset(name: str, variant: str | None = None) -> ExperimentConfig:
    return resolve_preset(load_preset_raw(name), variant)


def resolve(spec: str, variant: str | None = None) -> ExperimentConfig:
    """A config file path, or ``preset`` / ``preset:variant``."""
    p = Path(spec)
    if p.suffix == ".json" and p.exists():
        raw = json.loads(p.read_text())
        if "variants" in raw:
            return resolve_preset(raw, variant)
        return ExperimentConfig.from_dict(raw)
    name, _, v = spec.partition(":")
    return load_preset(name, v or variant)
