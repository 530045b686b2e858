"""Flat ``key = value`` experiment configuration.

One key per line, ``#`` starts a comment.  Command-line flags override file
values.  Every parse problem is reported with its source line and key.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .analytic import MODELS
from .channel import DEFAULT_PROFILE, FrameConfig, LinkProfile, ProfileError, TruncationPolicy
from .sim import SchemeId

__all__ = ["ConfigError", "SweepSpec", "ExperimentConfig", "parse_config_text",
           "load_config", "build_config", "SWEEPABLE"]

PROBABILITIES = ("p1", "p2", "p12", "p21", "q")
SWEEPABLE = PROBABILITIES + ("np", "ns", "cap")
_INTEGER_KEYS = {"np", "ns", "cap", "trials", "seed"}

DEFAULTS = {
    **dict(zip(PROBABILITIES, DEFAULT_PROFILE.as_tuple())),
    "np": 50, "ns": 30, "cap": None, "pout": 0.1,
    "scheme": "ARQ,SNC,ANC", "trials": 100_000, "seed": 1, "model": "exact",
    "vary": None, "start": None, "stop": None, "step": None, "out": None,
}


class ConfigError(ValueError):
    """Unparsable configuration; carries the source line and key when known."""

    def __init__(self, message, line=None, key=None, source="<config>"):
        where = source if line is None else f"{source}:{line}"
        if key is not None:
            where += f" [{key}]"
        super().__init__(f"{where}: {message}")
        self.line = line
        self.key = key


@dataclass(frozen=True)
class SweepSpec:
    varying: str
    start: float
    stop: float
    step: float

    def __post_init__(self):
        if self.varying not in SWEEPABLE:
            raise ConfigError(f"cannot sweep {self.varying!r}; choose from {', '.join(SWEEPABLE)}",
                              key="vary")
        if not self.step > 0:
            raise ConfigError("step must be > 0", key="step")
        if self.stop < self.start:
            raise ConfigError("empty range: stop < start", key="stop")

    def points(self):
        # tolerance keeps an endpoint like 0.9 that float steps land just past
        count = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        values = self.start + self.step * np.arange(count)
        if self.varying in ("np", "ns", "cap"):
            return [int(round(v)) for v in values]
        return [round(float(v), 12) for v in values]


@dataclass(frozen=True)
class ExperimentConfig:
    profile: LinkProfile
    n_primary: int
    n_secondary: int
    cap: int | None
    target_outage: float
    schemes: tuple = (SchemeId.ARQ, SchemeId.SNC, SchemeId.ANC)
    trials: int = 100_000
    seed: int = 1
    model: str = "exact"
    sweep: SweepSpec | None = None
    out: str | None = None

    @property
    def frame(self) -> FrameConfig:
        return FrameConfig(self.n_primary, self.n_secondary)

    @property
    def policy(self) -> TruncationPolicy:
        return TruncationPolicy(self.cap, self.target_outage)

    def at(self, key, value):
        """Copy with one sweepable key set."""
        if key in PROBABILITIES:
            return replace(self, profile=self.profile.replace(**{key: value}))
        name = {"np": "n_primary", "ns": "n_secondary", "cap": "cap"}[key]
        return replace(self, **{name: value})


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Map key -> (raw value, line number).  Later duplicates win."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected key = value", lineno, source=source)
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key not in DEFAULTS:
            raise ConfigError("unknown key", lineno, key, source)
        if not value:
            raise ConfigError("missing value", lineno, key, source)
        entries[key] = (value, lineno)
    return entries


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from None
    return parse_config_text(text, str(path))


def _convert(key, value):
    if value is None:
        return None
    if key == "cap" and str(value).strip().lower() in ("inf", "none"):
        return None
    if key in _INTEGER_KEYS:
        number = float(value)
        if not number.is_integer():
            raise ValueError(f"expected an integer, got {value!r}")
        return int(number)
    if key in PROBABILITIES or key in ("pout", "start", "stop", "step"):
        return float(value)
    if key == "scheme":
        text = str(value).strip()
        names = ["ARQ", "SNC", "ANC"] if text.lower() == "all" else text.split(",")
        return tuple(SchemeId.parse(n) for n in names if n.strip())
    if key == "model":
        if value not in MODELS:
            raise ValueError(f"model must be one of {', '.join(MODELS)}")
        return value
    if key == "vary":
        return str(value).strip().lower()
    return value


def build_config(file_entries: dict, overrides: dict, source="<config>") -> ExperimentConfig:
    """Merge defaults, file entries and flag overrides (flags win) and convert."""
    values = {}
    for key, default in DEFAULTS.items():
        line = None
        raw = default
        if key in file_entries:
            raw, line = file_entries[key]
        if overrides.get(key) is not None:
            raw, line = overrides[key], None
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            origin = source if line is not None else "command line"
            raise ConfigError(str(exc), line, key, origin) from None

    sweep = None
    if values["vary"] is not None:
        missing = [k for k in ("start", "stop", "step") if values[k] is None]
        if missing:
            raise ConfigError(f"sweep needs {', '.join(missing)}", key=missing[0])
        sweep = SweepSpec(values["vary"], values["start"], values["stop"], values["step"])
        if sweep.varying in PROBABILITIES and not (0.0 <= sweep.start and sweep.stop < 1.0):
            raise ProfileError(f"swept {sweep.varying} must stay in [0, 1)", sweep.varying)
    if values["trials"] < 0:
        raise ProfileError("trials must be >= 0", "trials")
    if values["seed"] < 0:
        raise ProfileError("seed must be >= 0", "seed")
    if not values["scheme"]:
        raise ConfigError("no scheme given", key="scheme")
    return ExperimentConfig(
        profile=LinkProfile(*(values[k] for k in PROBABILITIES)),
        n_primary=values["np"],
        n_secondary=values["ns"],
        cap=values["cap"],
        target_outage=values["pout"],
        schemes=values["scheme"],
        trials=values["trials"],
        seed=values["seed"],
        model=values["model"],
        sweep=sweep,
        out=values["out"],
    )
