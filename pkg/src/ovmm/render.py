"""ASCII and PGM renderings of the agent's top-down semantic map.

ASCII glyph table (highest priority first):

=====  =============================================
glyph  meaning
=====  =============================================
``>``  robot; one glyph per heading octant, ``> 3 v 1 < 7 ^ 9`` for
       octants 0..7 (diagonals follow the numeric keypad, rows grow downward)
``@``  chosen goal cell (dark mark)
``o``  other goal-map cells (light mark)
``*``  trajectory cell from a trace
letter semantic class with the highest probability (see ``CLASS_GLYPHS``)
``x``  collision mark
``#``  obstacle
``.``  explored free cell
``?``  unexplored
=====  =============================================

PGM output writes one binary (P5) image per channel, rows top to bottom in
increasing ``y`` order, with 0 = false and 255 = true (probabilities are
scaled to 0..255).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedFormat
from .mapping import GoalMap, SemanticMap
from .world import Cell, Pose, heading_octant

UNEXPLORED = "?"
FREE_GLYPH = "."
OBSTACLE = "#"
COLLISION = "x"
GOAL_LIGHT = "o"
GOAL_DARK = "@"
PATH = "*"
ROBOT = (">", "3", "v", "1", "<", "7", "^", "9")

CLASS_GLYPHS = {
    "table": "T",
    "counter": "C",
    "cabinet": "K",
    "drawer": "D",
    "chair": "H",
    "sofa": "S",
    "bed": "B",
    "cup": "u",
    "bowl": "w",
    "knife": "n",
    "book": "k",
    "backpack": "p",
    "box": "b",
}

FORMATS = ("ascii", "pgm")


@dataclass
class MapSnapshot:
    smap: SemanticMap
    pose: Pose | None = None
    goal_map: GoalMap = field(default_factory=GoalMap)
    path: tuple[Cell, ...] = ()


def _ascii_grid(snap: MapSnapshot) -> list[list[str]]:
    m = snap.smap
    grid = [[UNEXPLORED] * m.width for _ in range(m.height)]
    ys, xs = np.nonzero(m.explored)
    for x, y in zip(xs.tolist(), ys.tolist()):
        grid[y][x] = FREE_GLYPH
    ys, xs = np.nonzero(m.obstacle)
    for x, y in zip(xs.tolist(), ys.tolist()):
        grid[y][x] = OBSTACLE
    ys, xs = np.nonzero(m.collision_marks)
    for x, y in zip(xs.tolist(), ys.tolist()):
        grid[y][x] = COLLISION
    if m.classes:
        stack = np.stack([m.class_prob[c] for c in m.classes])
        best = stack.argmax(axis=0)
        ys, xs = np.nonzero(stack.max(axis=0) > 0)
        for x, y in zip(xs.tolist(), ys.tolist()):
            grid[y][x] = CLASS_GLYPHS.get(m.classes[best[y, x]], "?")
    for x, y in snap.path:
        grid[y][x] = PATH
    for x, y in snap.goal_map.cells:
        grid[y][x] = GOAL_LIGHT
    if snap.goal_map.chosen_goal is not None:
        x, y = snap.goal_map.chosen_goal
        grid[y][x] = GOAL_DARK
    if snap.pose is not None:
        grid[snap.pose.y][snap.pose.x] = ROBOT[heading_octant(snap.pose.heading)]
    return grid


def render_ascii(snap: MapSnapshot) -> bytes:
    return "".join("".join(row) + "\n" for row in _ascii_grid(snap)).encode("ascii")


def _pgm(arr: np.ndarray) -> bytes:
    h, w = arr.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + arr.astype(np.uint8).tobytes()


def render_pgm(snap: MapSnapshot) -> dict[str, bytes]:
    """One PGM image per channel, keyed by channel name."""
    m = snap.smap
    out = {
        "obstacle": _pgm(m.obstacle * 255),
        "explored": _pgm(m.explored * 255),
        "collision": _pgm(m.collision_marks * 255),
        "goal": _pgm(snap.goal_map.mask(m.shape) * 255),
    }
    for c in m.classes:
        out[f"class_{c}"] = _pgm(np.rint(np.clip(m.class_prob[c], 0, 1) * 255))
    return out


def render(snap: MapSnapshot, fmt: str = "ascii"):
    """Render ``snap``; ascii gives bytes, pgm gives a dict of channel images."""
    if fmt == "ascii":
        return render_ascii(snap)
    if fmt == "pgm":
        return render_pgm(snap)
    raise UnsupportedFormat(f"unsupported render format {fmt!r}; choose from {FORMATS}")


def snapshot_of(agent) -> MapSnapshot:
    """Capture the agent's current map, pose and goal map."""
    obs = getattr(agent, "obs", None)
    return MapSnapshot(agent.map.copy(), obs.pose if obs is not None else None, agent.last_goal_map)
