"""Semantic class inventory shared by the world, perception and agent."""

from __future__ import annotations

CELL_METERS = 0.25

# surface height (m) and footprint range (min_w, max_w, min_h, max_h) in cells
RECEPTACLES: dict[str, tuple[float, tuple[int, int, int, int]]] = {
    "table": (0.75, (3, 4, 3, 5)),
    "counter": (0.90, (3, 3, 4, 6)),
    "cabinet": (0.90, (1, 2, 2, 3)),
    "drawer": (0.80, (1, 1, 2, 2)),
    "chair": (0.45, (1, 1, 1, 1)),
    "sofa": (0.45, (2, 3, 3, 4)),
    "bed": (0.60, (3, 4, 4, 5)),
}

# object class -> size class
OBJECTS: dict[str, str] = {
    "cup": "small",
    "bowl": "small",
    "knife": "small",
    "book": "small",
    "backpack": "large",
    "box": "large",
}

RECEPTACLE_CLASSES = tuple(RECEPTACLES)
OBJECT_CLASSES = tuple(OBJECTS)
ALL_CLASSES = RECEPTACLE_CLASSES + OBJECT_CLASSES


def is_object_class(name: str) -> bool:
    return name in OBJECTS


def is_receptacle_class(name: str) -> bool:
    return name in RECEPTACLES


def surface_height(name: str) -> float:
    return RECEPTACLES[name][0]
