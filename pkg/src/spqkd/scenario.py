"""Scenario files: ``key = value`` lines describing one link operating point."""

from dataclasses import dataclass, field, replace
from importlib import resources
import math

import numpy as np

from .errors import ScenarioError, SpqkdError
from .optics import DetectorParams, GateParams, LinkBudget
from .source import EmissionTimeModel, SourceParams


@dataclass(frozen=True)
class AnalysisParams:
    f_p: float = 1.16
    qber_threshold: float = 0.11

    def __post_init__(self):
        if not self.f_p >= 1:
            raise ScenarioError("analysis.f_p must be >= 1")
        if not 0 < self.qber_threshold < 0.5:
            raise ScenarioError("analysis.qber_threshold must lie in (0, 0.5)")


@dataclass(frozen=True)
class Scenario:
    label: str
    source: SourceParams = field(default_factory=SourceParams)
    link: LinkBudget = field(default_factory=LinkBudget)
    detector: DetectorParams = field(default_factory=DetectorParams)
    gate: GateParams = field(default_factory=GateParams)
    analysis: AnalysisParams = field(default_factory=AnalysisParams)
    misalignment_error_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.label:
            raise ScenarioError("label must be nonempty")
        if not 0 <= self.misalignment_error_prob <= 1:
            raise ScenarioError("bob.misalignment_error_prob must lie in [0, 1]")

    @property
    def clock_hz(self) -> float:
        return self.source.clock_hz

    @property
    def mu(self) -> float:
        return self.source.mu

    @property
    def transmittance(self) -> float:
        """Collection-cone to detector surface, coupling included."""
        return self.source.coupling_efficiency * self.link.transmittance

    def time_model(self) -> EmissionTimeModel:
        return EmissionTimeModel(
            self.source.primary_lifetime_ps,
            self.source.tail_fraction,
            self.source.tail_lifetime_ns,
            self.detector.jitter_sigma_ps,
        )

    def get(self, key: str):
        section, attr = KEYS[key][:2]
        obj = self if section is None else getattr(self, section)
        return getattr(obj, attr)

    def with_value(self, key: str, value) -> "Scenario":
        if key not in KEYS:
            raise ScenarioError(f"unknown parameter path {key!r}")
        section, attr = KEYS[key][:2]
        try:
            if section is None:
                return replace(self, **{attr: value})
            return replace(self, **{section: replace(getattr(self, section), **{attr: value})})
        except SpqkdError as exc:
            raise ScenarioError(f"{key}: {exc}") from None


def _offset(text: str):
    return None if text.strip().lower() == "auto" else float(text)


def _int(text: str) -> int:
    f = float(text)
    if not f.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(f)


# file key -> (section attribute, field name, parser)
KEYS = {
    "label": (None, "label", str),
    "seed": (None, "seed", _int),
    "clock_hz": ("source", "clock_hz", float),
    "source.emission_rate_hz": ("source", "emission_rate_hz", float),
    "source.g2": ("source", "g2", float),
    "source.coupling_efficiency": ("source", "coupling_efficiency", float),
    "source.primary_lifetime_ps": ("source", "primary_lifetime_ps", float),
    "source.tail_fraction": ("source", "tail_fraction", float),
    "source.tail_lifetime_ns": ("source", "tail_lifetime_ns", float),
    "alice.loss_db": ("link", "alice_loss_db", float),
    "alice.extinction_ratio": ("link", "extinction_ratio", float),
    "channel.length_km": ("link", "fiber_length_km", float),
    "channel.atten_db_per_km": ("link", "fiber_atten_db_per_km", float),
    "bob.loss_db": ("link", "bob_loss_db", float),
    "bob.misalignment_error_prob": (None, "misalignment_error_prob", float),
    "detector.efficiency": ("detector", "efficiency", float),
    "detector.dark_rate_hz": ("detector", "dark_rate_hz", float),
    "detector.jitter_ps": ("detector", "jitter_sigma_ps", float),
    "detector.dead_time_ns": ("detector", "dead_time_ns", float),
    "detector.count": ("detector", "count", _int),
    "gate.width_ps": ("gate", "width_ps", float),
    "gate.offset_ps": ("gate", "offset_ps", _offset),
    "analysis.f_p": ("analysis", "f_p", float),
    "analysis.qber_threshold": ("analysis", "qber_threshold", float),
}

REQUIRED = ("label", "clock_hz", "source.emission_rate_hz", "source.g2", "channel.length_km")

_SECTIONS = {
    "source": SourceParams,
    "link": LinkBudget,
    "detector": DetectorParams,
    "gate": GateParams,
    "analysis": AnalysisParams,
}

# the section each key's invariant violations are reported against
_FIELD_KEY = {(sec, attr): key for key, (sec, attr, _) in KEYS.items()}


def parse_scenario(text: str) -> Scenario:
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ScenarioError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ScenarioError(f"duplicate key {key!r}", lineno)
        try:
            values[key] = KEYS[key][2](value)
        except ValueError as exc:
            raise ScenarioError(f"{key}: type mismatch ({exc})", lineno) from None
        lines[key] = lineno

    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ScenarioError("missing required keys: " + ", ".join(missing))

    grouped = {name: {} for name in _SECTIONS}
    top = {}
    for key, value in values.items():
        section, attr, _ = KEYS[key]
        (top if section is None else grouped[section])[attr] = value

    built = {}
    for name, cls in _SECTIONS.items():
        try:
            built[name] = cls(**grouped[name])
        except SpqkdError as exc:
            raise ScenarioError(f"invariant violation: {exc}", _blame(name, exc, lines)) from None
    try:
        return Scenario(**top, **built)
    except SpqkdError as exc:
        raise ScenarioError(f"invariant violation: {exc}", _blame(None, exc, lines)) from None


def _blame(section, exc, lines):
    msg = str(exc)
    for (sec, attr), key in _FIELD_KEY.items():
        if sec == section and attr in msg and key in lines:
            return lines[key]
    return None


def _fmt(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isinf(value):
            return "inf"
        return repr(value)
    return str(value)


def serialize_scenario(scenario: Scenario, header: str = "") -> str:
    out = [f"# {line}".rstrip() for line in header.splitlines()]
    for key in KEYS:
        out.append(f"{key} = {_fmt(scenario.get(key))}")
    return "\n".join(out) + "\n"


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


BUNDLED = (
    "paper-0km-0.25uW",
    "paper-0km-1uW",
    "paper-0km-5uW",
    "paper-2km-1uW",
    "paper-2km-5uW",
    "strauf-82MHz-10.6dB",
    "strauf-82MHz-3dB",
)


def bundled_text(name: str) -> str:
    return resources.files("spqkd.scenarios").joinpath(f"{name}.scenario").read_text("utf-8")


def load_bundled(name: str) -> Scenario:
    return parse_scenario(bundled_text(name))


def resolve(path_or_name: str) -> Scenario:
    """A scenario file path, or the name of a bundled scenario."""
    if path_or_name in BUNDLED:
        return load_bundled(path_or_name)
    return load_scenario(path_or_name)
