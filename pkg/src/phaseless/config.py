"""Run configuration: one JSON document with dotted-path overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .scatter import DEFAULT_SERIES_BUDGET, MODELS, FrequencyLadder
from .timedomain import QuadratureSpec


@dataclass
class ChordSpec:
    n_alpha: int = 360
    n_s: int = 256
    eps_edge: float = 0.02


@dataclass
class LadderSpec:
    k_min: float = 20.0
    k_max: float = 160.0
    n: int = 8
    values: list | None = None

    def build(self) -> FrequencyLadder:
        if self.values is not None:
            return FrequencyLadder(np.asarray(self.values, dtype=float))
        if not 0 < self.k_min < self.k_max or self.n < 2:
            raise ValidationError(f"invalid ladder k_min={self.k_min}, k_max={self.k_max}, n={self.n}")
        return FrequencyLadder.geometric(self.k_min, self.k_max, self.n)


@dataclass
class QuadratureConfig:
    n_z: int = 16
    n_phi: int = 16
    n_tau: int = 8
    n_t: int = 256
    tol: float = 1e-8
    n_max: int = 2

    def spec(self) -> QuadratureSpec:
        return QuadratureSpec(self.n_z, self.n_phi, self.n_tau)


@dataclass
class FBPSpec:
    n_image: int = 128
    filter: str = "ram-lak"
    apodization: str = "hann"
    basis: str = "inverse"
    clamp: bool = False


@dataclass
class NoiseSpec:
    sigma: float = 0.0
    seed: int | None = 0


@dataclass
class RunConfig:
    phantom: str = "phantom.json"
    slices: list = field(default_factory=lambda: [0.0])
    chords: ChordSpec = field(default_factory=ChordSpec)
    ladder: LadderSpec = field(default_factory=LadderSpec)
    model: str = "asymptotic"
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    fbp: FBPSpec = field(default_factory=FBPSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    output_dir: str = "out"
    budget: int = DEFAULT_SERIES_BUDGET

    def validate(self, check_files: bool = True) -> "RunConfig":
        if self.model not in MODELS:
            raise ValidationError(f"model must be one of {MODELS}, got {self.model!r}")
        if not self.slices:
            raise ValidationError("at least one slice height is required")
        if len(set(self.slices)) != len(self.slices):
            raise ValidationError(f"duplicate slice heights {self.slices}")
        if self.chords.n_alpha < 4 or self.chords.n_s < 4:
            raise ValidationError("chords.n_alpha and chords.n_s must be >= 4")
        if not 0 < self.chords.eps_edge < 1:
            raise ValidationError("chords.eps_edge must lie in (0, 1)")
        if self.fbp.n_image < 2:
            raise ValidationError("fbp.n_image must be >= 2")
        if self.fbp.filter != "ram-lak":
            raise ValidationError(f"unsupported filter {self.fbp.filter!r}")
        if self.fbp.apodization not in ("hann", "none"):
            raise ValidationError(f"unsupported apodization {self.fbp.apodization!r}")
        if self.noise.sigma < 0:
            raise ValidationError("noise.sigma must be >= 0")
        if self.budget < 1:
            raise ValidationError("budget must be positive")
        if not 1 <= self.quadrature.n_max <= 4:
            raise ValidationError("quadrature.n_max must lie in 1..4")
        if self.quadrature.n_t < 8 or not self.quadrature.tol > 0:
            raise ValidationError("quadrature.n_t must be >= 8 and tol > 0")
        self.quadrature.spec()
        self.ladder.build()
        if check_files and not Path(self.phantom).is_file():
            raise FormatError(self.phantom, "phantom file referenced by the config does not exist")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        return _build(cls, doc, "")

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json() + "\n")
        return path


def _build(cls, doc, prefix):
    if not isinstance(doc, dict):
        raise ValidationError(f"config section {prefix or '<root>'} must be an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(doc) - set(known)
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(prefix + k for k in unknown)}")
    kwargs = {}
    for name, value in doc.items():
        sub = _section_type(cls, name)
        kwargs[name] = _build(sub, value, f"{prefix}{name}.") if sub else value
    return cls(**kwargs)


def _section_type(cls, name):
    default = {f.name: f for f in dataclasses.fields(cls)}[name]
    if default.default_factory is not dataclasses.MISSING:
        probe = default.default_factory()
        if dataclasses.is_dataclass(probe):
            return type(probe)
    return None


def load_config(path, overrides=()) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise FormatError(path, "config file not found") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(path, f"config is not valid JSON ({exc})") from exc
    return apply_overrides(RunConfig.from_dict(doc), overrides)


def parse_value(text: str):
    """JSON literal if it parses, else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    """Apply ``key.sub=value`` assignments; values are parsed as JSON."""
    doc = cfg.to_dict()
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValidationError(f"override {item!r} must look like section.key=value")
        node = doc
        parts = key.lstrip("-").split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                raise ValidationError(f"unknown config section in override {key!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ValidationError(f"unknown config key in override {key!r}")
        node[parts[-1]] = parse_value(raw)
    return RunConfig.from_dict(doc)
