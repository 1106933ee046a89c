"""Run configuration: dataclasses plus a sectioned key=value text format.

The text format has ``[train]``, ``[degrade]`` and ``[isp]`` sections; every
key is optional (defaults below), unknown keys or sections are errors, and
``emit(parse(text))`` is canonical: sections and keys in schema order, floats
via repr.
"""

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ContractViolation
from .pipeline.degrade import DegradationConfig
from .pipeline.isp import IspParams


@dataclass(frozen=True)
class RawVSRConfig:
    num_frames: int = 7
    scale: int = 2
    feat_channels: int = 16
    growth: int = 16
    rdb_layers: int = 4
    se_reduction: int = 4
    lambda_f: float = 0.005
    lambda_p: float = 0.005
    batch_size: int = 4
    patch_size: int = 32
    epochs: int = 100
    steps_per_epoch: int = 20
    lr: float = 2e-4
    seed: int = 0
    isp_jitter: bool = True

    def __post_init__(self):
        if self.num_frames < 3 or self.num_frames % 2 == 0:
            raise ContractViolation(f"num_frames must be odd >= 3, got {self.num_frames}")
        if self.scale not in (2, 4):
            raise ContractViolation(f"scale must be 2 or 4, got {self.scale}")
        if self.lambda_f < 0 or self.lambda_p < 0:
            raise ContractViolation("loss weights must be non-negative")
        if self.patch_size % 2:
            raise ContractViolation(f"patch_size must be even (RGGB), got {self.patch_size}")

    @property
    def half_window(self):
        return self.num_frames // 2

    @property
    def total_steps(self):
        return self.epochs * self.steps_per_epoch


# --------------------------------------------------------------------------
# text format

_TRAIN_EXTRA = {"manifest": str, "out": str}

_BOOL_TOKENS = {"true": True, "false": False}


def _parse_value(raw, typ, key):
    raw = raw.strip()
    try:
        if typ is bool:
            if raw.lower() not in _BOOL_TOKENS:
                raise ValueError(raw)
            return _BOOL_TOKENS[raw.lower()]
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is str:
            return raw
        if typ is tuple:  # comma-separated floats
            return tuple(float(v) for v in raw.split(","))
    except ValueError as exc:
        raise ContractViolation(f"bad value for {key}: {raw!r}") from exc
    raise ContractViolation(f"unsupported config type for {key}")


def _format_value(val):
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return repr(val)
    if isinstance(val, tuple):
        return ",".join(repr(float(v)) for v in val)
    if isinstance(val, np.ndarray):
        return ",".join(repr(float(v)) for v in val.ravel())
    return str(val)


def _section_schema():
    train = {f.name: f.type for f in fields(RawVSRConfig)}
    train.update(_TRAIN_EXTRA)
    degrade = {"scale": int, "blur_size": int, "sigma1_sq": float, "sigma2_sq": float,
               "rng_seed": int}
    isp = {"wb_gains": tuple, "color_matrix": tuple, "gamma": float, "exposure": float,
           "contrast": float, "color_temperature": float, "quantize_bits": int}
    return {"train": train, "degrade": degrade, "isp": isp}


_SCHEMA = _section_schema()


@dataclass
class RunConfig:
    train: dict = field(default_factory=dict)
    degrade: dict = field(default_factory=dict)
    isp: dict = field(default_factory=dict)

    def vsr_config(self):
        kwargs = {k: v for k, v in self.train.items() if k not in _TRAIN_EXTRA}
        return RawVSRConfig(**kwargs)

    def degradation_config(self):
        kwargs = dict(self.degrade)
        kwargs.setdefault("scale", self.train.get("scale", RawVSRConfig().scale))
        return DegradationConfig(**kwargs)

    def isp_params(self):
        kwargs = dict(self.isp)
        if "color_matrix" in kwargs:
            kwargs["color_matrix"] = np.asarray(kwargs["color_matrix"]).reshape(3, 3)
        return IspParams(**kwargs)

    @property
    def manifest(self):
        if "manifest" not in self.train:
            raise ContractViolation("config is missing train.manifest")
        return Path(self.train["manifest"])

    @property
    def out_dir(self):
        if "out" not in self.train:
            raise ContractViolation("config is missing train.out")
        return Path(self.train["out"])


def parse(text):
    """Parse sectioned key=value text; unknown sections/keys are errors."""
    sections = {"train": {}, "degrade": {}, "isp": {}}
    current = None
    for lineno, raw_line in enumerate(text.splitlines(), 1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in sections:
                raise ContractViolation(f"line {lineno}: unknown section [{name}]")
            current = name
            continue
        if current is None:
            raise ContractViolation(f"line {lineno}: key outside any section")
        if "=" not in line:
            raise ContractViolation(f"line {lineno}: expected key = value, got {line!r}")
        key, _, raw_val = line.partition("=")
        key = key.strip()
        schema = _SCHEMA[current]
        if key not in schema:
            raise ContractViolation(f"line {lineno}: unknown key {key!r} in [{current}]")
        sections[current][key] = _parse_value(raw_val, schema[key], key)
    return RunConfig(**sections)


def emit(config):
    """Canonical text form: schema key order, only keys that were set."""
    lines = []
    for section in ("train", "degrade", "isp"):
        values = getattr(config, section)
        if not values:
            continue
        lines.append(f"[{section}]")
        for key in _SCHEMA[section]:
            if key in values:
                lines.append(f"{key} = {_format_value(values[key])}")
        lines.append("")
    return "\n".join(lines)
