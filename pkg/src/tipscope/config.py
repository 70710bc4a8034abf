"""JSON experiment configuration."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .detect import DetectorSettings
from .drift import DriftError, ParameterDrift
from .integrate import IntegrationOptions
from .systems import BUILTIN_NAMES, SystemModel, UnknownSystemError, builtin_system, polynomial_system

FORMATS = ("csv", "json")
DEFAULT_OUT = "tipscope-out"


class ConfigError(ValueError):
    pass


def default_out_dir() -> str:
    return os.environ.get("TIPSCOPE_OUT", DEFAULT_OUT)


@dataclass
class ExperimentConfig:
    """One experiment: a system at one rate plus integration and detector settings.

    ``system`` is a built-in name or a dict describing a polynomial system::

        {"name": "my_run", "family": "bistable", "drift": "linear",
         "coupling": null, "delta": 0.5, "lambda0": 0.0}
    """

    system: str | dict
    rate: float
    reference_rate: float | None = None
    initial_condition: list[float] | None = None
    t_span: list[float] | None = None
    integration: IntegrationOptions = field(default_factory=IntegrationOptions)
    detector: DetectorSettings = field(default_factory=DetectorSettings)
    out_dir: str = field(default_factory=default_out_dir)
    format: str = "csv"

    def __post_init__(self):
        if not isinstance(self.rate, (int, float)) or not math.isfinite(self.rate):
            raise ConfigError(f"rate must be a finite number, got {self.rate!r}")
        self.rate = float(self.rate)
        if self.reference_rate is not None:
            if not math.isfinite(self.reference_rate):
                raise ConfigError("reference_rate must be finite")
            self.reference_rate = float(self.reference_rate)
        if self.t_span is not None:
            if len(self.t_span) != 2 or not self.t_span[1] > self.t_span[0]:
                raise ConfigError(f"t_span must be [t0, t1] with t1 > t0, got {self.t_span!r}")
            self.t_span = [float(v) for v in self.t_span]
        if self.initial_condition is not None:
            self.initial_condition = [float(v) for v in self.initial_condition]
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")
        self.build_system()  # validates the system reference

    @property
    def system_name(self) -> str:
        if isinstance(self.system, str):
            return self.system
        return self.system.get("name", "custom")

    def settings(self) -> DetectorSettings:
        if self.reference_rate is None:
            return self.detector
        return DetectorSettings.from_dict({**self.detector.to_dict(), "reference_rate": self.reference_rate})

    def build_system(self, rate: float | None = None) -> SystemModel:
        rate = self.rate if rate is None else rate
        try:
            if isinstance(self.system, str):
                return builtin_system(self.system, rate)
            spec = dict(self.system)
            drift = ParameterDrift.create(spec.pop("drift", "linear"), rate, spec.pop("lambda0", None))
            unknown = set(spec) - {"name", "family", "coupling", "delta"}
            if unknown:
                raise ConfigError(f"unknown system keys: {sorted(unknown)}")
            return polynomial_system(
                spec.get("family", "unique"),
                drift,
                delta=float(spec.get("delta", 0.5)),
                coupling=spec.get("coupling"),
                t_span=tuple(self.t_span) if self.t_span else (0.0, 60.0),
                name=spec.get("name", "custom"),
            )
        except UnknownSystemError as exc:
            raise ConfigError(str(exc)) from None
        except (DriftError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid system: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "rate": self.rate,
            "reference_rate": self.reference_rate,
            "initial_condition": self.initial_condition,
            "t_span": self.t_span,
            "integration": self.integration.to_dict(),
            "detector": self.detector.to_dict(),
            "output": {"dir": self.out_dir, "format": self.format},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data = dict(data)
        unknown = set(data) - {"system", "rate", "reference_rate", "initial_condition", "t_span",
                               "integration", "detector", "output"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "system" not in data or "rate" not in data:
            raise ConfigError("config needs 'system' and 'rate'")
        out = data.pop("output", None) or {}
        try:
            integration = IntegrationOptions.from_dict(data.pop("integration", None) or {})
            detector = DetectorSettings.from_dict(data.pop("detector", None) or {})
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return cls(
            integration=integration,
            detector=detector,
            out_dir=out.get("dir", default_out_dir()),
            format=out.get("format", "csv"),
            **data,
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON: {exc}") from None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        return cls.loads(text)


def known_systems() -> tuple[str, ...]:
    return BUILTIN_NAMES
