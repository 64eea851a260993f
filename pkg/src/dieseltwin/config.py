"""Run configuration: INI-style file, schema-validated, fully defaulted.

Every knob the CLI exposes lives here.  Unknown sections or keys are
rejected with the offending line number; every key has a default so an
empty file is a valid configuration.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from configparser import ConfigParser
from dataclasses import dataclass, field
from pathlib import Path

from .constants import AmbientConditions, EngineConstants

__all__ = ["ConfigError", "RunConfig", "load_config", "config_hash"]


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps this to exit code 2."""


def _parse_segments(raw: str):
    try:
        return tuple(int(x) for x in raw.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad segment list {raw!r}") from exc


SCHEMA = {
    "run": {
        "seed": (int, 11),
        "out": (str, "runs/default"),
        "backend": (str, "auto"),  # auto | compiled | python
    },
    "simulate": {
        "dt_sim": (float, 0.01),
        "set_i_minutes": (int, 13),
        "set_ii_minutes": (int, 10),
        "set_iii_minutes": (int, 7),
        "set_vi_minutes": (int, 7),
    },
    "pretrain": {
        "surrogate_epochs": (int, 12_000),
        "surrogate_patience": (int, 2_500),
        "deeponet_epochs": (int, 30_000),
        "deeponet_stride": (int, 18),
        "deeponet_batch_rows": (int, 256),
        "deeponet_label_noise": (float, 0.0),
        "multihead_heads": (int, 24),
        "multihead_epochs": (int, 30_000),
        "multihead_patience": (int, 6_000),
    },
    "estimate": {
        "method": (str, "baseline"),
        "points": (int, 151),
        "noise": (str, "none"),  # none | paper
        "epochs_baseline": (int, 20_000),
        "multistage_scale": (float, 0.25),
        "epochs_fewshot": (int, 30_000),
        "fewshot_freeze_fraction": (float, 2.0 / 3.0),
        "seeds": (int, 10),
        "segments": (_parse_segments, (0, 1, 2, 3, 4)),
        "mask_dropout": (str, "on"),  # on | off
    },
    "engine": None,   # free-form EngineConstants overrides
    "ambient": {
        "T_amb": (float, AmbientConditions().T_amb),
        "p_amb": (float, AmbientConditions().p_amb),
    },
}

_ENGINE_FIELDS = {f.name: f for f in dataclasses.fields(EngineConstants)}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    source_path: str | None = None

    def __getitem__(self, key):
        section, name = key.split(".", 1)
        return self.values[section][name]

    def get(self, key, default=None):
        try:
            return self[key]
        except KeyError:
            return default

    def engine_constants(self) -> EngineConstants:
        overrides = self.values.get("engine", {})
        return EngineConstants().override(**overrides) if overrides else EngineConstants()

    def ambient(self) -> AmbientConditions:
        return AmbientConditions(self["ambient.T_amb"], self["ambient.p_amb"])

    def backend(self):
        b = self["run.backend"]
        return None if b == "auto" else b

    def canonical(self) -> str:
        return json.dumps(self.values, sort_keys=True, default=list)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def config_hash(cfg: RunConfig) -> str:
    return cfg.hash


def _find_line(path: Path | None, needle: str) -> str:
    if path is None:
        return ""
    try:
        for i, line in enumerate(path.read_text().splitlines(), 1):
            if needle in line.split("=")[0] or needle in line:
                return f" ({path}:{i})"
    except OSError:
        pass
    return ""


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Parse and validate; ``overrides`` maps "section.key" to raw values."""
    parser = ConfigParser()
    src = None
    if path is not None:
        src = Path(path)
        if not src.exists():
            raise ConfigError(f"config file not found: {src}")
        parser.read(src)

    values: dict = {}
    for section, keys in SCHEMA.items():
        if keys is None:
            continue
        values[section] = {name: default for name, (_, default) in keys.items()}
    values["engine"] = {}

    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]{_find_line(src, section)}")
        for name, raw in parser.items(section):
            _apply(values, section, name, raw, src)

    for dotted, raw in (overrides or {}).items():
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must be section.key")
        section, name = dotted.split(".", 1)
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        _apply(values, section, name, raw, None)

    method = values["estimate"]["method"]
    if method not in ("baseline", "multistage", "fewshot"):
        raise ConfigError(f"unknown method {method!r}")
    if values["estimate"]["points"] not in (151, 301):
        raise ConfigError("points must be 151 or 301")
    if values["estimate"]["noise"] not in ("none", "paper"):
        raise ConfigError("noise must be 'none' or 'paper'")
    return RunConfig(values=values, source_path=str(path) if path else None)


def _apply(values, section, name, raw, src):
    if section == "engine":
        if name not in _ENGINE_FIELDS:
            raise ConfigError(f"unknown engine constant {name!r}{_find_line(src, name)}")
        ftype = _ENGINE_FIELDS[name].type
        cast = int if ftype in ("int", int) else float
        try:
            values["engine"][name] = cast(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for engine.{name}: {raw!r}") from exc
        return
    keys = SCHEMA[section]
    if name not in keys:
        raise ConfigError(f"unknown key {name!r} in [{section}]{_find_line(src, name)}")
    cast = keys[name][0]
    try:
        if isinstance(raw, str):
            values[section][name] = cast(raw)
        elif cast is _parse_segments:
            values[section][name] = tuple(int(x) for x in raw)
        else:
            values[section][name] = cast(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {section}.{name}: {raw!r}") from exc
