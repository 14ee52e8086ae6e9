"""Simulated open-vocabulary detector plus the confidence and floor-height filters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import taxonomy
from .config import AgentConfig, NoiseConfig
from .errors import UnknownClass
from .world import FREE, Cell, EpisodeGoal, Observation


@dataclass(frozen=True)
class Detection:
    cls: str
    confidence: float
    cells: tuple[Cell, ...]
    estimated_height: float
    # diagnostics only, never read by the agent
    source: str = "true"

    def __post_init__(self) -> None:
        if not self.cells:
            raise ValueError("detection needs at least one cell")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.estimated_height < 0:
            raise ValueError("estimated_height must be >= 0")


@dataclass(frozen=True)
class ThresholdTable:
    per_class: dict[str, float] = field(default_factory=dict)
    legacy: float = 0.40

    def __getitem__(self, cls: str) -> float:
        try:
            return self.per_class[cls]
        except KeyError:
            raise UnknownClass(f"no confidence threshold for class {cls!r}") from None

    @classmethod
    def for_goal(cls, goal: EpisodeGoal, config: AgentConfig | None = None) -> "ThresholdTable":
        """Per-class thresholds: goal classes get their own values, the rest the legacy one."""
        config = config or AgentConfig()
        table = {c: config.legacy_threshold for c in taxonomy.ALL_CLASSES}
        table[goal.object_cls] = config.object_threshold
        table[goal.start_cls] = config.start_threshold
        table[goal.end_cls] = config.end_threshold
        return cls(table, config.legacy_threshold)

    @classmethod
    def uniform(cls, value: float, classes=taxonomy.ALL_CLASSES) -> "ThresholdTable":
        return cls({c: value for c in classes}, value)


def _partners(noise: NoiseConfig) -> dict[str, str]:
    out = {}
    for a, b in noise.confusion_pairs:
        out[a] = b
        out[b] = a
    return out


def _draw(rng: np.random.Generator, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    return float(min(1.0, max(0.0, rng.uniform(lo, hi))))


def simulate_detections(
    obs: Observation,
    scene_receptacles,
    noise: NoiseConfig,
    rng: np.random.Generator,
    receptacle_classes=None,
) -> list[Detection]:
    """Turn a ground-truth frame into noisy detections.

    ``scene_receptacles`` maps instance id to its ``ReceptacleInstance`` (a
    scene's ``receptacles`` tuple works). One detection per visible
    receptacle instance and per visible object, then at most one floor
    false positive. Random draws happen in a fixed order so that the same
    frame and stream always produce the same output.
    """
    if receptacle_classes is None:
        receptacle_classes = noise.floor_fp_classes or taxonomy.RECEPTACLE_CLASSES
    partners = _partners(noise)
    noiseless = noise.is_noiseless
    out: list[Detection] = []

    kinds = obs.kinds
    rids = np.unique(kinds[kinds > 0])
    for rid in rids.tolist():
        rec = scene_receptacles[rid - 1]
        sel = kinds == rid
        cells = tuple(zip(obs.xs[sel].tolist(), obs.ys[sel].tolist()))
        det = _noisy(rec.cls, cells, rec.surface_height, noise, partners, rng, noiseless, False)
        if det is not None:
            out.append(det)
    for o in obs.objects:
        h = float(scene_receptacles[o.support - 1].surface_height) if o.support else 0.0
        det = _noisy(o.cls, (o.cell,), h, noise, partners, rng, noiseless, True)
        if det is not None:
            out.append(det)

    if noise.p_floor_fp > 0:
        floor = kinds == FREE
        floor &= obs.distance > 0
        if rng.random() < noise.p_floor_fp and np.any(floor):
            fx, fy = obs.xs[floor], obs.ys[floor]
            k = int(rng.integers(len(fx)))
            cx, cy = int(fx[k]), int(fy[k])
            near = (np.abs(fx - cx) <= 1) & (np.abs(fy - cy) <= 1)
            cells = tuple(zip(fx[near].tolist(), fy[near].tolist()))
            cls = str(receptacle_classes[int(rng.integers(len(receptacle_classes)))])
            out.append(Detection(cls, _draw(rng, noise.floor_conf), cells, 0.0, "floor"))
    return out


def _noisy(cls, cells, height, noise, partners, rng, noiseless, is_object):
    if noiseless:
        return Detection(cls, 1.0, cells, height, "true")
    # fixed draw order: miss, confuse, confidence
    if rng.random() < noise.p_miss:
        rng.random()
        rng.random()
        return None
    confused = rng.random() < noise.p_confuse and cls in partners
    u = rng.random()
    if confused:
        lo, hi = noise.confused_conf
        return Detection(partners[cls], float(lo + (hi - lo) * u), cells, height, "confused")
    lo, hi = noise.object_conf if is_object else noise.true_conf
    return Detection(cls, float(lo + (hi - lo) * u), cells, height, "true")


def filter_detections(
    raw: list[Detection],
    thresholds: ThresholdTable,
    height_floor: float | None,
    mode: str = "improved",
) -> list[Detection]:
    """Keep the detections that pass the confidence and floor-height rules.

    ``improved`` applies per-class thresholds and, for receptacle classes,
    requires ``estimated_height > height_floor`` (pass ``None`` to skip the
    height rule). ``baseline`` applies the single legacy threshold only.
    """
    if mode == "baseline":
        return [d for d in raw if d.confidence >= thresholds.legacy]
    if mode != "improved":
        raise ValueError(f"unknown filter mode {mode!r}")
    kept = []
    for d in raw:
        if d.confidence < thresholds[d.cls]:
            continue
        if (
            height_floor is not None
            and not taxonomy.is_object_class(d.cls)
            and d.estimated_height <= height_floor
        ):
            continue
        kept.append(d)
    return kept


def agent_filter(raw: list[Detection], goal: EpisodeGoal, config: AgentConfig) -> list[Detection]:
    """Apply whichever detection improvements the agent config switches on."""
    if config.dynamic_thresholds:
        table = ThresholdTable.for_goal(goal, config)
    else:
        table = ThresholdTable.uniform(config.legacy_threshold)
    floor = config.height_floor if config.height_filter else None
    return filter_detections(raw, table, floor, "improved")
