"""Declarative experiment configuration."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..enhancement import EnhancerConfig
from ..noise_mixer import NOISE_KINDS, canonical_kind
from ..vc.model import METHODS, check_method

SNR_LEVELS = (0.0, 10.0, 20.0)
NOISE_SCOPES = ("target_train", "both")
BASELINE = "source"  # unconverted source features scored like a method


@dataclass(frozen=True)
class NoiseCondition:
    kind: str = "clean"
    snr_db: float | None = None

    def __post_init__(self):
        if self.kind == "clean":
            if self.snr_db is not None:
                raise ValueError("the clean condition has no SNR")
        else:
            object.__setattr__(self, "kind", canonical_kind(self.kind))
            if self.snr_db is None:
                raise ValueError(f"noise condition {self.kind} needs an SNR")
            object.__setattr__(self, "snr_db", float(self.snr_db))

    @property
    def is_clean(self) -> bool:
        return self.kind == "clean"

    @property
    def label(self) -> str:
        return "clean" if self.is_clean else f"{self.kind}_{self.snr_db:g}dB"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "snr_db": self.snr_db}

    @classmethod
    def parse(cls, spec) -> "NoiseCondition":
        """From a dict, a NoiseCondition, or strings like ``clean`` / ``white:10``."""
        if isinstance(spec, NoiseCondition):
            return spec
        if isinstance(spec, dict):
            return cls(spec.get("kind", "clean"), spec.get("snr_db"))
        text = str(spec)
        if text == "clean":
            return cls()
        kind, _, snr = text.partition(":")
        return cls(kind, float(snr))


def all_conditions(kinds=NOISE_KINDS, snrs=SNR_LEVELS) -> list:
    return [NoiseCondition()] + [NoiseCondition(k, s) for k in kinds for s in snrs]


def all_directions(speakers) -> list:
    return [(a, b) for a, b in itertools.permutations(speakers, 2)]


@dataclass
class ExperimentMatrix:
    conversion_directions: list
    noise_conditions: list = field(default_factory=all_conditions)
    enhancers: list = field(default_factory=lambda: [EnhancerConfig("none")])
    methods: list = field(default_factory=lambda: list(METHODS))
    noise_applies_to: str = "target_train"
    seed: int = 0
    include_baseline: bool = True

    def __post_init__(self):
        self.conversion_directions = [tuple(d) for d in self.conversion_directions]
        self.noise_conditions = [NoiseCondition.parse(c) for c in self.noise_conditions]
        self.enhancers = [e if isinstance(e, EnhancerConfig) else EnhancerConfig(**e) if isinstance(e, dict)
                          else EnhancerConfig(str(e)) for e in self.enhancers]
        for m in self.methods:
            check_method(m)
        if not (self.conversion_directions and self.noise_conditions and self.enhancers and self.methods):
            raise ValueError("experiment matrix lists must be nonempty")
        if self.noise_applies_to not in NOISE_SCOPES:
            raise ValueError(f"noise_applies_to must be one of {NOISE_SCOPES}")
        for a, b in self.conversion_directions:
            if a == b:
                raise ValueError(f"direction {a}->{b} converts a speaker to itself")

    @property
    def scored_methods(self) -> list:
        return ([BASELINE] if self.include_baseline else []) + list(self.methods)

    def to_dict(self) -> dict:
        return {
            "conversion_directions": [list(d) for d in self.conversion_directions],
            "noise_conditions": [c.to_dict() for c in self.noise_conditions],
            "enhancers": [e.to_dict() for e in self.enhancers],
            "methods": list(self.methods),
            "noise_applies_to": self.noise_applies_to,
            "seed": self.seed,
            "include_baseline": self.include_baseline,
        }

    @classmethod
    def from_dict(cls, d: dict, speakers=None) -> "ExperimentMatrix":
        d = dict(d)
        dirs = d.pop("conversion_directions", None)
        if dirs in (None, "all"):
            if speakers is None:
                raise ValueError("directions 'all' needs the manifest speaker list")
            dirs = all_directions(speakers)
        return cls(dirs, **d)

    @classmethod
    def load(cls, path, speakers=None) -> "ExperimentMatrix":
        return cls.from_dict(json.loads(Path(path).read_text()), speakers)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")
