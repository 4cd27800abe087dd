"""Flat ``section.key = value`` experiment configuration.

Blank lines and ``#`` comments are ignored. Every key has a parser and a
range check; a rejected configuration names the key and the constraint it
broke. Command-line flags are applied as overrides on the same key space.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np

from .adaptive import VARIANCE_MODES, AdaptiveConfig
from .harness import OUTLIER_MODES, VARIANTS, OutlierModel, Setup
from .models import NoiseSpec, TargetScenario


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(v) for v in str(text).replace(";", ",").split(",") if v.strip())


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text):
    f = float(text)
    if f != int(f):
        raise ValueError(f"not an integer: {text!r}")
    return int(f)


def _variants(text):
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


def _variance_mode(text):
    t = str(text).strip()
    return "paper_literal" if t == "paper" else t


def _positive(v):
    return v > 0


def _positive_all(v):
    return len(v) > 0 and all(x > 0 for x in v)


@dataclass(frozen=True)
class Key:
    parse: Callable
    default: object
    check: Callable = lambda v: True
    constraint: str = ""


def _diag(m):
    return tuple(float(x) for x in np.diag(m))


_SCN = TargetScenario()
_SETUP = Setup()
_AD = AdaptiveConfig()
_OUT = OutlierModel()

SCHEMA: Dict[str, Key] = {
    "scenario.Ts": Key(float, _SCN.Ts, _positive, "> 0 (seconds)"),
    "scenario.kx": Key(float, _SCN.kx),
    "scenario.ky": Key(float, _SCN.ky),
    "scenario.g": Key(float, _SCN.g),
    "scenario.sx": Key(float, _SCN.sx),
    "scenario.sy": Key(float, _SCN.sy),
    "scenario.x0": Key(_floats, _SCN.x0, lambda v: len(v) == 4, "exactly 4 values"),
    "scenario.steps": Key(_int, _SCN.steps, lambda v: v >= 1, ">= 1"),
    "truth.Q_diag": Key(_floats, _diag(_SETUP.truth_noise.Q), lambda v: len(v) == 4 and min(v) >= 0, "4 values >= 0"),
    "truth.R_diag": Key(_floats, _diag(_SETUP.truth_noise.R), lambda v: len(v) == 2 and min(v) >= 0, "2 values >= 0"),
    "filter.Q_diag": Key(_floats, _diag(_SETUP.filter_noise.Q), lambda v: len(v) == 4 and _positive_all(v), "4 values > 0"),
    "filter.R_diag": Key(_floats, _diag(_SETUP.filter_noise.R), lambda v: len(v) == 2 and _positive_all(v), "2 values > 0"),
    "filter.P0_diag": Key(_floats, _SETUP.P0_diag, lambda v: len(v) == 4 and _positive_all(v), "4 values > 0"),
    "adaptive.window_size": Key(_int, _AD.window_size, lambda v: v >= 2, ">= 2"),
    "adaptive.r_floor": Key(float, _AD.r_floor, _positive, "> 0"),
    "adaptive.q_floor": Key(float, _AD.q_floor, _positive, "> 0"),
    "adaptive.relative_floor": Key(_bool, _AD.relative_floor),
    "adaptive.adapt_q": Key(_bool, _AD.adapt_q),
    "adaptive.variance_mode": Key(_variance_mode, _AD.variance_mode, lambda v: v in VARIANCE_MODES, f"one of paper, {', '.join(VARIANCE_MODES)}"),
    "adaptive.uniform_weights": Key(_bool, _AD.uniform_weights),
    "adaptive.joseph": Key(_bool, _AD.joseph),
    "outliers.probability": Key(float, _OUT.probability, lambda v: 0 <= v < 1, "in [0, 1)"),
    "outliers.magnitude": Key(float, _OUT.magnitude, lambda v: v >= 1, ">= 1"),
    "outliers.mode": Key(str, _OUT.mode, lambda v: v in OUTLIER_MODES, f"one of {', '.join(OUTLIER_MODES)}"),
    "experiment.variants": Key(_variants, VARIANTS, lambda v: len(v) > 0 and all(x in VARIANTS for x in v) and len(set(v)) == len(v), f"distinct values from {', '.join(VARIANTS)}"),
    "experiment.runs": Key(_int, 50, lambda v: v >= 1, ">= 1"),
    "experiment.seed": Key(_int, 0, lambda v: v >= 0, ">= 0"),
    "experiment.workers": Key(_int, 1, lambda v: v >= 1, ">= 1"),
    "experiment.out": Key(str, "results"),
}


NOT_IN_HEADER = ("experiment.out", "experiment.workers")


def parse_text(text, source="<config>"):
    """Raw ``key -> string`` pairs from config text."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        raw[key] = value
    return raw


def resolve(raw: Dict[str, object]) -> Dict[str, object]:
    """Parse and range-check every key, filling defaults."""
    values = {}
    for key, spec in SCHEMA.items():
        if key in raw:
            try:
                v = spec.parse(raw[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: cannot parse {raw[key]!r} ({exc})") from exc
        else:
            v = spec.default
        if not spec.check(v):
            raise ConfigError(f"{key}: value {v!r} violates constraint {spec.constraint}")
        values[key] = v
    unknown = set(raw) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r}")
    return values


@dataclass
class ExperimentConfig:
    setup: Setup
    variants: List[str]
    runs: int
    seed: int
    workers: int
    out: Path
    values: Dict[str, object] = field(default_factory=dict)

    @classmethod
    def from_values(cls, v):
        try:
            scenario = TargetScenario(
                Ts=v["scenario.Ts"], kx=v["scenario.kx"], ky=v["scenario.ky"], g=v["scenario.g"],
                sx=v["scenario.sx"], sy=v["scenario.sy"], x0=v["scenario.x0"], steps=v["scenario.steps"],
            )
            setup = Setup(
                scenario=scenario,
                truth_noise=NoiseSpec(np.diag(v["truth.Q_diag"]), np.diag(v["truth.R_diag"])),
                filter_noise=NoiseSpec(np.diag(v["filter.Q_diag"]), np.diag(v["filter.R_diag"])),
                outliers=OutlierModel(v["outliers.probability"], v["outliers.magnitude"], v["outliers.mode"]),
                adaptive=AdaptiveConfig(
                    window_size=v["adaptive.window_size"],
                    r_floor=v["adaptive.r_floor"],
                    q_floor=v["adaptive.q_floor"],
                    adapt_q=v["adaptive.adapt_q"],
                    variance_mode=v["adaptive.variance_mode"],
                    uniform_weights=v["adaptive.uniform_weights"],
                    joseph=v["adaptive.joseph"],
                    relative_floor=v["adaptive.relative_floor"],
                ),
                P0_diag=tuple(v["filter.P0_diag"]),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(
            setup=setup,
            variants=list(v["experiment.variants"]),
            runs=v["experiment.runs"],
            seed=v["experiment.seed"],
            workers=v["experiment.workers"],
            out=Path(v["experiment.out"]),
            values=dict(v),
        )

    def header_lines(self):
        """``key = value`` lines for every key that can change the results.

        The output directory and worker count are left out so reruns elsewhere
        or in parallel produce identical files.
        """
        return [f"{k} = {format_value(self.values[k])}" for k in SCHEMA if k not in NOT_IN_HEADER]


def format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (tuple, list)):
        return ", ".join(format_value(x) for x in v)
    return str(v)


def load(path=None, overrides=None) -> ExperimentConfig:
    """Read ``path`` (optional), apply ``overrides`` (flag wins), validate."""
    raw = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        raw.update(parse_text(text, str(path)))
    for key, value in (overrides or {}).items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}")
        raw[key] = value
    return ExperimentConfig.from_values(resolve(raw))
