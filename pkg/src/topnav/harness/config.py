"""Run configuration and its sectioned key-value file format.

Example::

    [planner]
    k_T1 = 1.5
    [prior_costs]
    level4 = 0.9
"""

from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from ..gridmap import GRID_PRESETS, GridSpec
from ..planner import PATH_COST_MODES, TIE_PREFERENCES, PlannerConfig
from ..proprio import ProprioConfig
from ..sim import GenConfig, MotionModelConfig, SensorConfig
from ..terrain import SIM_PRIOR_COSTS, TerrainCorrectionConfig


class ConfigError(ValueError):
    pass


@dataclass
class ClassifierConfig:
    noise_sigma: float = 0.05
    softmax_temperature: float = 0.1
    K: int = 8


@dataclass
class GridConfig:
    profile: str = "sim"

    @property
    def spec(self) -> GridSpec:
        return GRID_PRESETS[self.profile]


def _sim_terrain() -> TerrainCorrectionConfig:
    return TerrainCorrectionConfig(prior_costs=dict(SIM_PRIOR_COSTS))


@dataclass
class Config:
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    proprio: ProprioConfig = field(default_factory=ProprioConfig)
    terrain: TerrainCorrectionConfig = field(default_factory=_sim_terrain)
    motion: MotionModelConfig = field(default_factory=MotionModelConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    world: GenConfig = field(default_factory=GenConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    grid: GridConfig = field(default_factory=GridConfig)

    @property
    def spec(self) -> GridSpec:
        return self.grid.spec


SECTIONS = [f.name for f in dataclasses.fields(Config)]


def _parse_value(raw: str, typ, where: str):
    raw = raw.strip()
    origin = typing.get_origin(typ)
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ is str:
            return raw
        if origin is tuple:
            args = typing.get_args(typ)
            elem = args[0]
            return tuple(_parse_value(p, elem, where) for p in raw.split(","))
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from exc
    raise ConfigError(f"{where}: unsupported field type {typ}")


def _apply(section_obj, items: dict[str, str], section: str):
    hints = typing.get_type_hints(type(section_obj))
    names = {f.name for f in dataclasses.fields(section_obj)}
    for key, raw in items.items():
        if key not in names or key == "prior_costs":
            raise ConfigError(f"unknown key [{section}] {key}")
        setattr(section_obj, key, _parse_value(raw, hints[key], f"[{section}] {key}"))


def load_config(path: str | Path | None = None, text: str | None = None) -> Config:
    """Read a config file on top of the simulation defaults. Unknown keys are errors."""
    cfg = Config()
    if path is None and text is None:
        return cfg
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        if text is not None:
            parser.read_string(text)
        else:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    for section in parser.sections():
        items = dict(parser.items(section))
        if section == "prior_costs":
            cfg.terrain.prior_costs = {
                k: _parse_value(v, float, f"[prior_costs] {k}") for k, v in items.items()}
            continue
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        _apply(getattr(cfg, section), items, section)
    if cfg.grid.profile not in GRID_PRESETS:
        raise ConfigError(f"unknown grid profile {cfg.grid.profile!r}")
    if cfg.planner.tie_preference not in TIE_PREFERENCES:
        raise ConfigError(f"unknown tie_preference {cfg.planner.tie_preference!r}")
    if cfg.planner.path_cost_mode not in PATH_COST_MODES:
        raise ConfigError(f"unknown path_cost_mode {cfg.planner.path_cost_mode!r}")
    return cfg


def dump_config(cfg: Config) -> str:
    """Serialize every field; load_config(text=dump_config(c)) reproduces c."""
    lines = []
    for section in SECTIONS:
        obj = getattr(cfg, section)
        lines.append(f"[{section}]")
        for f in dataclasses.fields(obj):
            if f.name == "prior_costs":
                continue
            v = getattr(obj, f.name)
            if isinstance(v, tuple):
                v = ", ".join(repr(x) for x in v)
            lines.append(f"{f.name} = {v}")
        lines.append("")
    lines.append("[prior_costs]")
    for k, v in cfg.terrain.prior_costs.items():
        lines.append(f"{k} = {v!r}")
    return "\n".join(lines) + "\n"
