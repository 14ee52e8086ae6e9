"""Run configuration: dataclasses plus the flat ``key = value`` file format.

Keys are ``section.field`` where section is one of ``scene``, ``noise`` or
``agent``. Unknown keys raise :class:`ConfigError`. Tuple values are written
comma separated, confusion pairs as ``a:b,c:d``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import typing
from dataclasses import dataclass, field
from pathlib import Path

from . import taxonomy
from .errors import ConfigError, UnknownClass

FLAGS = (
    "dynamic_thresholds",
    "height_filter",
    "prob_goal_selection",
    "oscillation_guard",
    "collision_marking",
    "center_alignment",
    "pick_retry",
    "pick_verify",
    "incremental_approach",
    "edge_safe_placement",
    "surface_fallback",
    "drop_from_height",
)


@dataclass
class SceneConfig:
    width: int = 48
    height: int = 48
    rooms_min: int = 3
    rooms_max: int = 5
    door_min: int = 1
    door_max: int = 2
    receptacles_per_room_min: int = 1
    receptacles_per_room_max: int = 3
    # "random" or "object,start_receptacle,end_receptacle"
    goal: str = "random"
    receptacle_classes: tuple[str, ...] = ()
    object_classes: tuple[str, ...] = ()
    end_instances_min: int = 1
    distractors: int = 2
    reach: int = 6
    view_angle: float = 90.0
    view_range: int = 20
    max_retries: int = 200


@dataclass
class NoiseConfig:
    p_miss: float = 0.2
    p_confuse: float = 0.1
    confusion_pairs: tuple[tuple[str, str], ...] = (
        ("chair", "sofa"),
        ("table", "counter"),
        ("cabinet", "drawer"),
    )
    p_floor_fp: float = 0.1
    # classes a floor false positive may take; empty means every receptacle class
    floor_fp_classes: tuple[str, ...] = ()
    true_conf: tuple[float, float] = (0.45, 1.0)
    object_conf: tuple[float, float] = (0.15, 0.65)
    confused_conf: tuple[float, float] = (0.30, 0.60)
    floor_conf: tuple[float, float] = (0.40, 0.80)

    def __post_init__(self) -> None:
        for name in ("p_miss", "p_confuse", "p_floor_fp"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"noise.{name}={p} outside [0, 1]")
        for c in self.floor_fp_classes:
            if not taxonomy.is_receptacle_class(c):
                raise UnknownClass(f"noise.floor_fp_classes: unknown receptacle class {c!r}")

    @classmethod
    def noiseless(cls) -> "NoiseConfig":
        return cls(p_miss=0.0, p_confuse=0.0, p_floor_fp=0.0)

    @property
    def is_noiseless(self) -> bool:
        return self.p_miss == 0 and self.p_confuse == 0 and self.p_floor_fp == 0


@dataclass
class AgentConfig:
    dynamic_thresholds: bool = True
    height_filter: bool = True
    prob_goal_selection: bool = True
    oscillation_guard: bool = True
    collision_marking: bool = True
    center_alignment: bool = True
    pick_retry: bool = True
    pick_verify: bool = True
    incremental_approach: bool = True
    edge_safe_placement: bool = True
    surface_fallback: bool = True
    drop_from_height: bool = True

    object_threshold: float = 0.25
    start_threshold: float = 0.35
    end_threshold: float = 0.50
    legacy_threshold: float = 0.40
    height_floor: float = 0.10

    history: int = 20
    repeats: int = 3
    blacklist_steps: int = 50
    lookahead: int = 8
    inflation: int = 1
    nav_stop: float = 3.0
    place_standoff: float = 2.5
    max_approach_steps: int = 8
    pick_scan_left: int = 2
    pick_scan_right: int = 4
    edge_margin: int = 2

    @classmethod
    def baseline(cls) -> "AgentConfig":
        return cls(**{f: False for f in FLAGS})

    @classmethod
    def uniteam(cls) -> "AgentConfig":
        return cls(**{f: True for f in FLAGS})

    def with_flags(self, **flags: bool) -> "AgentConfig":
        for name in flags:
            if name not in FLAGS:
                raise ConfigError(f"unknown ablation flag {name!r}")
        return dataclasses.replace(self, **flags)


@dataclass
class RunConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    budget: int = 1250

    def canonical_text(self) -> str:
        lines = [f"run.budget = {self.budget}"]
        for section in ("scene", "noise", "agent"):
            obj = getattr(self, section)
            for f in dataclasses.fields(obj):
                lines.append(f"{section}.{f.name} = {_format(getattr(obj, f.name))}")
        return "\n".join(sorted(lines)) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]


def _format(value) -> str:
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ",".join(f"{a}:{b}" for a, b in value)
        return ",".join(_format(v) for v in value)
    return str(value)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "on", "yes"):
        return True
    if t in ("0", "false", "off", "no"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse(text: str, hint) -> object:
    text = text.strip()
    origin = typing.get_origin(hint)
    if hint is bool:
        return _parse_bool(text)
    if hint is int:
        return int(text)
    if hint is float:
        return float(text)
    if hint is str:
        return text
    if origin is tuple:
        args = typing.get_args(hint)
        if not text:
            return ()
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if args and typing.get_origin(args[0]) is tuple:
            pairs = []
            for p in parts:
                a, sep, b = p.partition(":")
                if not sep:
                    raise ConfigError(f"expected a:b pair, got {p!r}")
                pairs.append((a.strip(), b.strip()))
            return tuple(pairs)
        if len(args) == 2 and args[1] is not Ellipsis:
            if len(parts) != 2:
                raise ConfigError(f"expected two values, got {text!r}")
            return (args[0](parts[0]), args[1](parts[1]))
        return tuple(args[0](p) for p in parts)
    raise ConfigError(f"unsupported config type {hint!r}")


def apply_overrides(cfg: RunConfig, items: dict[str, str]) -> RunConfig:
    sections = {
        "scene": cfg.scene,
        "noise": cfg.noise,
        "agent": cfg.agent,
    }
    updates: dict[str, dict[str, object]] = {k: {} for k in sections}
    budget = cfg.budget
    for key, raw in items.items():
        if key == "run.budget":
            budget = int(raw)
            continue
        section, _, name = key.partition(".")
        if section not in sections:
            raise ConfigError(f"unknown config key {key!r}")
        hints = typing.get_type_hints(type(sections[section]))
        if name not in hints:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            updates[section][name] = _parse(raw, hints[name])
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
    return RunConfig(
        scene=dataclasses.replace(cfg.scene, **updates["scene"]),
        noise=dataclasses.replace(cfg.noise, **updates["noise"]),
        agent=dataclasses.replace(cfg.agent, **updates["agent"]),
        budget=budget,
    )


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    items: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        items[key.strip()] = value.strip()
    return apply_overrides(base or RunConfig(), items)


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    return parse_config_text(Path(path).read_text(), base)
