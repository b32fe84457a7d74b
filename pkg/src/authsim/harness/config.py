"""Experiment configuration: an INI file with one section per concern.

Grammar (``#`` or ``;`` starts a comment, keys are case-sensitive)::

    [experiment]            trials, seed, workers, output
    [scenario]              M, alpha, beta1, beta2, sigma_A, sigma_B, sigma_E, schedule
    [pla] | [akba] | [skba] exactly one scheme block (keys below)
    [sweep]                 param, grid = start:stop:steps

Every key is optional except the presence of one scheme block; see
``SCHEMA`` for types and defaults.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, replace
from typing import Any, Callable

import numpy as np

from ..akba import QuantizerConfig
from ..channel import Party, PilotSchedule, ScenarioParams
from ..pla import ATTACK_MODELS, VARIANCE_MODES, PlaConfig
from ..skba import Codebook, build_codebook

SCHEMES = ("pla", "akba", "skba")


class ConfigError(ValueError):
    """Configuration problems; ``errors`` lists one message per offending key."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        text = text.strip()
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text
    return parse


def _pos_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise ValueError("must be a nonnegative integer")
    return v


def _unit(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise ValueError("must lie in [0, 1]")
    return v


def _nonneg(text: str) -> float:
    v = float(text)
    if not v >= 0.0:
        raise ValueError("must be nonnegative")
    return v


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0.0:
        raise ValueError("must be positive")
    return v


def _at_least(n: int) -> Callable[[str], int]:
    def parse(text: str) -> int:
        v = int(text)
        if v < n:
            raise ValueError(f"must be an integer >= {n}")
        return v
    return parse


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "experiment": {
        "trials": (_pos_int, 10_000),
        "seed": (_nonneg_int, 0),
        "workers": (_pos_int, 1),
        "output": (str, None),
    },
    "scenario": {
        "M": (_pos_int, 2),
        "alpha": (_unit, 0.9),
        "beta1": (_unit, 0.5),
        "beta2": (_unit, 0.5),
        "sigma_A": (_nonneg, 0.1),
        "sigma_B": (_nonneg, 0.1),
        "sigma_E": (_nonneg, 0.1),
        "schedule": (str, None),
    },
    "pla": {
        "theta": (_positive, 1.0),
        "t": (_at_least(2), 3),
        "variance_mode": (_choice(*VARIANCE_MODES), "exact"),
        "attack_model": (_choice(*ATTACK_MODELS), "refreshed"),
        "covariance": (_choice("exact", "lagless"), "exact"),
    },
    "akba": {
        "levels": (_at_least(2), 4),
        "v_sat": (_positive, 1.5),
        "hash": (str, "sha256"),
        "attacks": (_pos_int, 1),
        "observed_slots": (_pos_int, 2),
        "prior": (_bool, True),
    },
    "skba": {
        "codebook": (_choice("random", "lattice"), "random"),
        "size": (_at_least(2), 64),
        "codebook_seed": (_nonneg_int, 0),
        "scale": (_positive, 1.0),
        "step": (_positive, 1.0),
        "attacks": (_pos_int, 1),
        "key_bits": (_nonneg_int, 128),
        "hash": (str, "sha256"),
        "static_handshake": (_bool, False),
    },
    "sweep": {
        "param": (str, None),
        "grid": (str, None),
    },
}

# Parameters whose sweep reuses the same per-trial draws without re-simulation.
THRESHOLD_PARAM = {"pla": "theta", "akba": "attacks", "skba": "attacks"}
INTEGER_PARAMS = {"M", "t", "levels", "attacks", "observed_slots", "size"}


@dataclass(frozen=True)
class AkbaConfig:
    quantizer: QuantizerConfig
    hash_name: str = "sha256"
    attacks: int = 1
    observed_slots: int = 2
    prior: bool = True


@dataclass(frozen=True)
class SkbaConfig:
    codebook: str = "random"
    size: int = 64
    codebook_seed: int = 0
    scale: float = 1.0
    step: float = 1.0
    attacks: int = 1
    key_bits: int = 128
    hash_name: str = "sha256"
    static_handshake: bool = False

    def build(self, N: int) -> Codebook:
        return build_codebook(self.codebook, N, self.size, self.codebook_seed, self.scale, self.step)


@dataclass(frozen=True)
class Sweep:
    param: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class ExperimentConfig:
    scheme: str
    scenario: ScenarioParams
    block: PlaConfig | AkbaConfig | SkbaConfig
    trials: int
    workers: int = 1
    output: str | None = None
    sweep: Sweep | None = None
    schedule_text: str | None = None

    @property
    def seed(self) -> int:
        return self.scenario.seed

    @property
    def threshold_param(self) -> str:
        return THRESHOLD_PARAM[self.scheme]

    def threshold_value(self):
        return getattr(self.block, self.threshold_param)

    def with_overrides(self, trials=None, seed=None, output=None, workers=None) -> "ExperimentConfig":
        cfg = self
        if trials is not None:
            if trials < 1:
                raise ConfigError(["experiment.trials: must be a positive integer"])
            cfg = replace(cfg, trials=trials)
        if seed is not None:
            if seed < 0:
                raise ConfigError(["experiment.seed: must be a nonnegative integer"])
            cfg = replace(cfg, scenario=replace(cfg.scenario, seed=seed))
        if output is not None:
            cfg = replace(cfg, output=output)
        if workers is not None:
            if workers < 1:
                raise ConfigError(["experiment.workers: must be a positive integer"])
            cfg = replace(cfg, workers=workers)
        return cfg

    def with_value(self, param: str, value) -> "ExperimentConfig":
        """Copy with one scalar parameter replaced (scenario or scheme block)."""
        section, name = resolve_param(self.scheme, param)
        if name in INTEGER_PARAMS:
            value = int(round(value))
        try:
            cfg = self
            if section == "scenario":
                cfg = replace(cfg, scenario=replace(cfg.scenario, **{name: value}))
            elif self.scheme == "akba" and name in ("levels", "v_sat"):
                q = replace(cfg.block.quantizer, **{name: value})
                cfg = replace(cfg, block=replace(cfg.block, quantizer=q))
            else:
                cfg = replace(cfg, block=replace(cfg.block, **{name: value}))
            sched = _schedule(cfg.scheme, cfg.schedule_text, cfg.block)
        except ValueError as exc:
            raise ConfigError([f"{section}.{name}: {exc}"]) from exc
        errors = _check_schedule(cfg.scheme, sched, cfg.block)
        if errors:
            raise ConfigError(errors)
        return replace(cfg, scenario=replace(cfg.scenario, schedule=sched))


def resolve_param(scheme: str, param: str) -> tuple[str, str]:
    """Map ``alpha`` or ``scenario.alpha`` to its section and key name."""
    if "." in param:
        section, name = param.split(".", 1)
    else:
        section = "scenario" if param in SCHEMA["scenario"] else scheme
        name = param
    if section not in ("scenario", scheme) or name not in SCHEMA[section] or name in ("schedule", "hash"):
        raise ConfigError([f"sweep.param: {param!r} is not a sweepable parameter of scheme {scheme}"])
    if SCHEMA[section][name][0] in (str, _bool) or isinstance(SCHEMA[section][name][1], str):
        raise ConfigError([f"sweep.param: {param!r} is not numeric"])
    return section, name


def parse_grid(text: str) -> tuple[float, ...]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError("grid must look like start:stop:steps")
    start, stop, steps = float(parts[0]), float(parts[1]), int(parts[2])
    if steps < 1:
        raise ValueError("grid needs at least one step")
    return tuple(float(v) for v in np.linspace(start, stop, steps))


def _schedule(scheme: str, text: str | None, block) -> PilotSchedule:
    if scheme == "pla":
        length = block.t
        default = "pla-default"
    elif scheme == "akba":
        length = block.observed_slots
        default = "akba-default"
    else:
        length = 2
        default = "akba-default"
    return PilotSchedule.parse(text or default, length)


def _check_schedule(scheme: str, sched: PilotSchedule, block) -> list[str]:
    errs = []
    if scheme == "pla":
        if len(sched) != block.t:
            errs.append(f"scenario.schedule: PLA schedule must span slots 1..t ({block.t})")
        elif sched.transmitter(1) is not Party.BOB or sched.transmitter(block.t) is not Party.BOB:
            errs.append("scenario.schedule: Bob must transmit at slot 1 and at the authenticated slot t")
    else:
        expect = PilotSchedule.preset("akba-default", len(sched))
        if sched != expect:
            errs.append(f"scenario.schedule: {scheme} requires Alice on odd slots and Bob on even slots")
    return errs


def load_config(text: str) -> ExperimentConfig:
    """Parse and validate a config document; raises :class:`ConfigError`."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from exc

    errors: list[str] = []
    values: dict[str, dict[str, Any]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            errors.append(f"{section}: unknown section")
            continue
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                errors.append(f"{section}.{key}: unknown key")
                continue
            parse = SCHEMA[section][key][0]
            try:
                values[section][key] = parse(raw)
            except ValueError as exc:
                errors.append(f"{section}.{key}: {exc}")

    present = [s for s in SCHEMES if parser.has_section(s)]
    if len(present) == 0:
        errors.append("scheme: one of [pla], [akba], [skba] is required")
    elif len(present) > 1:
        errors.append(f"scheme: exactly one scheme block allowed, found {', '.join(present)}")
    if errors:
        raise ConfigError(errors)

    def get(section, key):
        return values.get(section, {}).get(key, SCHEMA[section][key][1])

    scheme = present[0]
    if scheme == "pla":
        block = PlaConfig(get("pla", "theta"), get("pla", "t"), get("pla", "variance_mode"),
                          get("pla", "attack_model"), get("pla", "covariance"))
    elif scheme == "akba":
        block = AkbaConfig(QuantizerConfig(get("akba", "levels"), get("akba", "v_sat")),
                           get("akba", "hash"), get("akba", "attacks"),
                           get("akba", "observed_slots"), get("akba", "prior"))
    else:
        block = SkbaConfig(get("skba", "codebook"), get("skba", "size"), get("skba", "codebook_seed"),
                           get("skba", "scale"), get("skba", "step"), get("skba", "attacks"),
                           get("skba", "key_bits"), get("skba", "hash"), get("skba", "static_handshake"))
        if block.codebook == "lattice" and block.attacks > 1:
            errors.append("skba.attacks: multiple attacks need a random codebook")

    hash_name = getattr(block, "hash_name", None)
    if hash_name is not None and hash_name not in hashlib.algorithms_available:
        errors.append(f"{scheme}.hash: unknown hash {hash_name!r}")

    sched_text = get("scenario", "schedule")
    try:
        sched = _schedule(scheme, sched_text, block)
        errors += _check_schedule(scheme, sched, block)
    except ValueError as exc:
        errors.append(f"scenario.schedule: {exc}")
        sched = None

    sweep = None
    if "sweep" in values:
        param, grid = get("sweep", "param"), get("sweep", "grid")
        if param is None:
            errors.append("sweep.param: required when [sweep] is present")
        if grid is None:
            errors.append("sweep.grid: required when [sweep] is present")
        if param is not None and grid is not None:
            try:
                resolve_param(scheme, param)
                sweep = Sweep(param, parse_grid(grid))
            except ConfigError as exc:
                errors += exc.errors
            except ValueError as exc:
                errors.append(f"sweep.grid: {exc}")
    if errors:
        raise ConfigError(errors)

    scenario = ScenarioParams(get("scenario", "M"), get("scenario", "alpha"), get("scenario", "beta1"),
                              get("scenario", "beta2"), get("scenario", "sigma_A"), get("scenario", "sigma_B"),
                              get("scenario", "sigma_E"), sched, get("experiment", "seed"))
    return ExperimentConfig(scheme, scenario, block, get("experiment", "trials"),
                            get("experiment", "workers"), get("experiment", "output"), sweep, sched_text)


def load_config_file(path) -> ExperimentConfig:
    with open(path) as fh:
        return load_config(fh.read())
