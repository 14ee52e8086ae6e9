"""Deterministic 2.5D grid world.

Coordinates are ``(x, y)`` with ``x`` the column and ``y`` the row of the
``cells`` array (indexed ``cells[y, x]``). Heading 0 points along +x and
headings grow counterclockwise toward +y. One cell is 0.25 m.

``cells`` holds ``FREE`` (0), ``WALL`` (-1) or a receptacle instance id (>= 1).
"""

from __future__ import annotations

import dataclasses
import math
from collections import deque
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from . import taxonomy
from .config import SceneConfig
from .errors import ConfigError, GenerationFailed, InvalidAction
from .rng import substream

FREE = 0
WALL = -1

HEADINGS = tuple(range(0, 360, 30))
# octant index -> grid step, counterclockwise from +x
DIRS = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))

Cell = tuple[int, int]


def heading_octant(heading: float) -> int:
    """Nearest of the 8 grid directions; exact ties go counterclockwise."""
    return int(math.floor(heading / 45.0 + 0.5)) % 8


def heading_step(heading: float) -> Cell:
    return DIRS[heading_octant(heading)]


@dataclass(frozen=True)
class Pose:
    x: int
    y: int
    heading: int = 0

    def __post_init__(self) -> None:
        if self.heading % 30 != 0 or not 0 <= self.heading < 360:
            raise ValueError(f"heading must be a multiple of 30 in [0, 360), got {self.heading}")

    @property
    def cell(self) -> Cell:
        return (self.x, self.y)

    def turned(self, delta: int) -> "Pose":
        return Pose(self.x, self.y, (self.heading + delta) % 360)

    def moved_to(self, cell: Cell) -> "Pose":
        return Pose(cell[0], cell[1], self.heading)


@dataclass(frozen=True)
class Action:
    kind: str
    target: Cell | None = None
    drop: bool = False

    KINDS = ("move_forward", "turn_left", "turn_right", "pick", "place", "stop")

    def __str__(self) -> str:
        if self.kind == "pick":
            return f"pick({self.target[0]},{self.target[1]})"
        if self.kind == "place":
            return f"place({self.target[0]},{self.target[1]}{',drop' if self.drop else ''})"
        return self.kind


MOVE_FORWARD = Action("move_forward")
TURN_LEFT = Action("turn_left")
TURN_RIGHT = Action("turn_right")
STOP = Action("stop")


def pick(target: Cell) -> Action:
    return Action("pick", tuple(target))


def place(target: Cell, drop: bool = False) -> Action:
    return Action("place", tuple(target), drop)


@dataclass(frozen=True)
class Event:
    kind: str = "none"
    object_id: int | None = None
    reason: str | None = None

    def __str__(self) -> str:
        if self.reason:
            return f"{self.kind}({self.reason})"
        return self.kind


NO_EVENT = Event()


@dataclass(frozen=True)
class ReceptacleInstance:
    id: int
    cls: str
    cells: tuple[Cell, ...]
    surface_height: float


@dataclass(frozen=True)
class ObjectInstance:
    id: int
    cls: str
    cell: Cell | None
    size: str
    # on_receptacle | held | on_floor | fallen
    state: str
    support: int | None = None
    goal: bool = False


@dataclass(frozen=True)
class EpisodeGoal:
    object_cls: str
    start_cls: str
    end_cls: str

    def classes(self) -> tuple[str, str, str]:
        return (self.object_cls, self.start_cls, self.end_cls)


@dataclass(frozen=True)
class RobotState:
    pose: Pose
    held: int | None = None


@dataclass(frozen=True, eq=False)
class Scene:
    cells: np.ndarray
    receptacles: tuple[ReceptacleInstance, ...]
    objects: tuple[ObjectInstance, ...]
    start_pose: Pose
    goal: EpisodeGoal
    reach: int = 6
    view_angle: float = 90.0
    view_range: int = 20

    @property
    def width(self) -> int:
        return int(self.cells.shape[1])

    @property
    def height(self) -> int:
        return int(self.cells.shape[0])

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Scene) and self.to_text() == other.to_text()

    __hash__ = None  # type: ignore[assignment]

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def kind_at(self, cell: Cell) -> int:
        return int(self.cells[cell[1], cell[0]])

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and self.kind_at(cell) == FREE

    def receptacle(self, rid: int) -> ReceptacleInstance:
        return self.receptacles[rid - 1]

    @property
    def goal_object(self) -> ObjectInstance:
        return next(o for o in self.objects if o.goal)

    def object_by_id(self, oid: int) -> ObjectInstance:
        return next(o for o in self.objects if o.id == oid)

    def end_cells(self) -> set[Cell]:
        return {
            c for r in self.receptacles if r.cls == self.goal.end_cls for c in r.cells
        }

    @cached_property
    def heights(self) -> np.ndarray:
        h = np.zeros(self.cells.shape, dtype=float)
        h[self.cells == WALL] = 2.5
        for r in self.receptacles:
            for x, y in r.cells:
                h[y, x] = r.surface_height
        return h

    @cached_property
    def edge_depth(self) -> np.ndarray:
        """Chebyshev distance from each receptacle cell to the nearest cell outside its cluster."""
        depth = np.zeros(self.cells.shape, dtype=int)
        for r in self.receptacles:
            own = set(r.cells)
            for x, y in r.cells:
                d = 1
                while all(
                    (x + i, y + j) in own
                    for i in range(-d, d + 1)
                    for j in range(-d, d + 1)
                ):
                    d += 1
                depth[y, x] = d
        return depth

    def safe_depth(self, rid: int) -> int:
        """Minimum edge depth at which an object placed on ``rid`` stays put."""
        deepest = max(int(self.edge_depth[y, x]) for x, y in self.receptacle(rid).cells)
        return min(2, deepest)

    def with_objects(self, objects: tuple[ObjectInstance, ...]) -> "Scene":
        return dataclasses.replace(self, objects=objects)

    # ---- plain-text serialization -------------------------------------
    def to_text(self) -> str:
        lines = [f"{self.width} {self.height}"]
        for y in range(self.height):
            row = []
            for x in range(self.width):
                k = int(self.cells[y, x])
                row.append("." if k == FREE else "#" if k == WALL else _glyph(k))
            lines.append("".join(row))
        for r in self.receptacles:
            cells = " ".join(f"{x},{y}" for x, y in r.cells)
            lines.append(f"receptacle {r.id} {r.cls} {r.surface_height:g} {cells}")
        for o in self.objects:
            cell = "-" if o.cell is None else f"{o.cell[0]},{o.cell[1]}"
            support = "-" if o.support is None else str(o.support)
            lines.append(
                f"object {o.id} {o.cls} {o.size} {o.state} {cell} {support}"
                + (" goal" if o.goal else "")
            )
        p = self.start_pose
        lines.append(f"start {p.x} {p.y} {p.heading}")
        g = self.goal
        lines.append(f"goal {g.object_cls} {g.start_cls} {g.end_cls}")
        lines.append(f"sensing {self.reach} {self.view_angle:g} {self.view_range}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Scene":
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith(";")]
        w, h = (int(v) for v in lines[0].split())
        grid = lines[1 : 1 + h]
        cells = np.zeros((h, w), dtype=np.int16)
        for y, row in enumerate(grid):
            if len(row) != w:
                raise ValueError(f"row {y} has width {len(row)}, expected {w}")
            for x, ch in enumerate(row):
                cells[y, x] = FREE if ch == "." else WALL if ch == "#" else _glyph_id(ch)
        receptacles, objects = [], []
        start, goal, sensing = None, None, (6, 90.0, 20)
        for ln in lines[1 + h :]:
            parts = ln.split()
            tag = parts[0]
            if tag == "receptacle":
                rid, rcls, height = int(parts[1]), parts[2], float(parts[3])
                rcells = tuple(_parse_cell(c) for c in parts[4:])
                if not rcells:
                    rcells = tuple(
                        (int(x), int(y)) for y, x in zip(*np.nonzero(cells == rid))
                    )
                receptacles.append(ReceptacleInstance(rid, rcls, rcells, height))
            elif tag == "object":
                oid, ocls, size, state = int(parts[1]), parts[2], parts[3], parts[4]
                cell = None if parts[5] == "-" else _parse_cell(parts[5])
                support = None if parts[6] == "-" else int(parts[6])
                objects.append(
                    ObjectInstance(oid, ocls, cell, size, state, support, "goal" in parts[7:])
                )
            elif tag == "start":
                start = Pose(int(parts[1]), int(parts[2]), int(parts[3]))
            elif tag == "goal":
                goal = EpisodeGoal(parts[1], parts[2], parts[3])
            elif tag == "sensing":
                sensing = (int(parts[1]), float(parts[2]), int(parts[3]))
            else:
                raise ValueError(f"unknown scene line {ln!r}")
        if start is None or goal is None:
            raise ValueError("scene text needs 'start' and 'goal' lines")
        receptacles.sort(key=lambda r: r.id)
        return cls(
            cells, tuple(receptacles), tuple(objects), start, goal, *sensing
        )


_GLYPHS = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz"


def _glyph(rid: int) -> str:
    return _GLYPHS[(rid - 1) % len(_GLYPHS)]


def _glyph_id(ch: str) -> int:
    if ch not in _GLYPHS:
        raise ValueError(f"bad cell glyph {ch!r}")
    return _GLYPHS.index(ch) + 1


def _parse_cell(text: str) -> Cell:
    x, y = text.split(",")
    return (int(x), int(y))


def validate_scene(scene: Scene) -> None:
    """Check the structural invariants; raises ``ValueError`` on violation."""
    for r in scene.receptacles:
        if r.surface_height <= 0 or not r.cells:
            raise ValueError(f"receptacle {r.id} invalid")
        for x, y in r.cells:
            if scene.cells[y, x] != r.id:
                raise ValueError(f"receptacle {r.id} cell {(x, y)} not tagged")
        if not _connected4(set(r.cells)):
            raise ValueError(f"receptacle {r.id} not 4-connected")
    goals = [o for o in scene.objects if o.goal]
    if len(goals) != 1:
        raise ValueError("exactly one goal object required")
    if not scene.is_free(scene.start_pose.cell):
        raise ValueError("start pose not on a free cell")


def _connected4(cells: set[Cell]) -> bool:
    first = next(iter(cells))
    seen = {first}
    todo = [first]
    while todo:
        x, y = todo.pop()
        for n in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if n in cells and n not in seen:
                seen.add(n)
                todo.append(n)
    return len(seen) == len(cells)


def free_reachable(scene: Scene, start: Cell) -> set[Cell]:
    """8-connected flood fill over free cells."""
    seen = {start}
    todo = deque([start])
    while todo:
        x, y = todo.popleft()
        for dx, dy in DIRS:
            n = (x + dx, y + dy)
            if n not in seen and scene.is_free(n):
                seen.add(n)
                todo.append(n)
    return seen


def approach_cells(scene: Scene, rid: int) -> set[Cell]:
    out = set()
    for x, y in scene.receptacle(rid).cells:
        for dx, dy in DIRS:
            n = (x + dx, y + dy)
            if scene.is_free(n):
                out.add(n)
    return out


def is_solvable(scene: Scene) -> bool:
    reach = free_reachable(scene, scene.start_pose.cell)
    obj = scene.goal_object
    if obj.support is None or not approach_cells(scene, obj.support) & reach:
        return False
    return any(
        approach_cells(scene, r.id) & reach
        for r in scene.receptacles
        if r.cls == scene.goal.end_cls
    )


# ---- generation ---------------------------------------------------------

MIN_ROOM = 6


def _split_rooms(rng: np.random.Generator, w: int, h: int, n_rooms: int):
    """Binary space partition of the interior; returns (rooms, walls).

    Rooms are inclusive interior rectangles ``(x0, y0, x1, y1)``. Walls are
    ``(axis, coord, lo, hi)`` segments separating two sibling subtrees.
    """
    rooms = [(1, 1, w - 2, h - 2)]
    walls = []
    attempts = 0
    while len(rooms) < n_rooms and attempts < 100:
        attempts += 1
        order = sorted(
            range(len(rooms)),
            key=lambda i: -((rooms[i][2] - rooms[i][0]) * (rooms[i][3] - rooms[i][1])),
        )
        idx = order[0] if rng.random() < 0.7 else int(rng.integers(len(rooms)))
        x0, y0, x1, y1 = rooms[idx]
        rw, rh = x1 - x0 + 1, y1 - y0 + 1
        vertical = rw > rh if rw != rh else bool(rng.integers(2))
        span = rw if vertical else rh
        if span < 2 * MIN_ROOM + 1:
            vertical = not vertical
            span = rw if vertical else rh
            if span < 2 * MIN_ROOM + 1:
                continue
        cut = int(rng.integers(MIN_ROOM, span - MIN_ROOM))
        rooms.pop(idx)
        if vertical:
            c = x0 + cut
            rooms += [(x0, y0, c - 1, y1), (c + 1, y0, x1, y1)]
            walls.append(("x", c, y0, y1))
        else:
            c = y0 + cut
            rooms += [(x0, y0, x1, c - 1), (x0, c + 1, x1, y1)]
            walls.append(("y", c, x0, x1))
    return rooms, walls


def _cut_doors(rng, cells: np.ndarray, walls, door_min: int, door_max: int) -> list[Cell]:
    doors: list[Cell] = []
    for axis, c, lo, hi in walls:
        options = []
        for t in range(lo, hi + 1):
            if axis == "x":
                ok = cells[t, c - 1] == FREE and cells[t, c + 1] == FREE
            else:
                ok = cells[c - 1, t] == FREE and cells[c + 1, t] == FREE
            options.append(ok)
        width = int(rng.integers(door_min, door_max + 1))
        starts = [
            i for i in range(len(options) - width + 1) if all(options[i : i + width])
        ]
        if not starts:
            starts = [i for i, ok in enumerate(options) if ok]
            width = 1
        if not starts:
            continue
        s = starts[int(rng.integers(len(starts)))]
        for t in range(lo + s, lo + s + width):
            cell = (c, t) if axis == "x" else (t, c)
            cells[cell[1], cell[0]] = FREE
            doors.append(cell)
    return doors


def _place_rect(rng, cells, room, rw, rh, tries=40):
    x0, y0, x1, y1 = room
    for _ in range(tries):
        if x1 - x0 + 1 - 2 < rw or y1 - y0 + 1 - 2 < rh:
            return None
        px = int(rng.integers(x0 + 1, x1 - rw + 1))
        py = int(rng.integers(y0 + 1, y1 - rh + 1))
        # one free cell of clearance to walls and other receptacles
        block = cells[py - 2 : py + rh + 2, px - 2 : px + rw + 2]
        inner = cells[py - 1 : py + rh + 1, px - 1 : px + rw + 1]
        if np.any(inner != FREE):
            continue
        if np.any(block > 0):
            continue
        return px, py
    return None


def parse_goal(text: str) -> EpisodeGoal | None:
    if text.strip() in ("", "random"):
        return None
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"goal must be 'object,start,end' or 'random', got {text!r}")
    goal = EpisodeGoal(*parts)
    if not taxonomy.is_object_class(goal.object_cls):
        raise ConfigError(f"unknown object class {goal.object_cls!r}")
    for c in (goal.start_cls, goal.end_cls):
        if not taxonomy.is_receptacle_class(c):
            raise ConfigError(f"unknown receptacle class {c!r}")
    if goal.start_cls == goal.end_cls:
        raise ConfigError("start and end receptacle classes must differ")
    return goal


def generate_scene(seed: int, config: SceneConfig | None = None) -> Scene:
    """Procedurally build a solvable scene; identical inputs give identical scenes."""
    config = config or SceneConfig()
    rec_classes = tuple(config.receptacle_classes) or taxonomy.RECEPTACLE_CLASSES
    obj_classes = tuple(config.object_classes) or taxonomy.OBJECT_CLASSES
    for c in rec_classes:
        if not taxonomy.is_receptacle_class(c):
            raise ConfigError(f"unknown receptacle class {c!r}")
    for c in obj_classes:
        if not taxonomy.is_object_class(c):
            raise ConfigError(f"unknown object class {c!r}")
    if len(rec_classes) < 2:
        raise ConfigError("need at least two receptacle classes")
    if config.rooms_min < 1 or config.rooms_max < config.rooms_min:
        raise ConfigError("bad room count range")
    fixed_goal = parse_goal(config.goal)
    rng = substream(seed, "scene")
    for _ in range(config.max_retries):
        scene = _try_generate(rng, config, rec_classes, obj_classes, fixed_goal)
        if scene is not None and is_solvable(scene):
            return scene
    raise GenerationFailed(f"no solvable scene after {config.max_retries} attempts")


def _try_generate(rng, config, rec_classes, obj_classes, fixed_goal):
    w, h = config.width, config.height
    if w < MIN_ROOM + 2 or h < MIN_ROOM + 2:
        raise ConfigError("grid too small")
    cells = np.full((h, w), WALL, dtype=np.int16)
    cells[1:-1, 1:-1] = FREE
    n_rooms = int(rng.integers(config.rooms_min, config.rooms_max + 1))
    rooms, walls = _split_rooms(rng, w, h, n_rooms)
    for axis, c, lo, hi in walls:
        if axis == "x":
            cells[lo : hi + 1, c] = WALL
        else:
            cells[c, lo : hi + 1] = WALL
    _cut_doors(rng, cells, walls, config.door_min, config.door_max)

    if fixed_goal is None:
        start_cls, end_cls = (str(c) for c in rng.choice(rec_classes, 2, replace=False))
        goal = EpisodeGoal(str(rng.choice(obj_classes)), start_cls, end_cls)
    else:
        goal = fixed_goal

    wanted = [goal.start_cls] + [goal.end_cls] * max(1, config.end_instances_min)
    for room in rooms:
        n = int(rng.integers(config.receptacles_per_room_min, config.receptacles_per_room_max + 1))
        for _ in range(n):
            wanted.append(str(rng.choice(rec_classes)))

    receptacles: list[ReceptacleInstance] = []
    room_order = list(range(len(rooms)))
    for i, rcls in enumerate(wanted):
        height, (wmin, wmax, hmin, hmax) = taxonomy.RECEPTACLES[rcls]
        rw = int(rng.integers(wmin, wmax + 1))
        rh = int(rng.integers(hmin, hmax + 1))
        if rng.random() < 0.5:
            rw, rh = rh, rw
        placed = None
        rng.shuffle(room_order)
        for ri in room_order:
            placed = _place_rect(rng, cells, rooms[ri], rw, rh)
            if placed:
                break
        if placed is None:
            if i <= max(1, config.end_instances_min):
                return None
            continue
        px, py = placed
        rid = len(receptacles) + 1
        cells[py : py + rh, px : px + rw] = rid
        rcells = tuple((x, y) for y in range(py, py + rh) for x in range(px, px + rw))
        receptacles.append(ReceptacleInstance(rid, rcls, rcells, height))

    starts = [r for r in receptacles if r.cls == goal.start_cls]
    support = starts[int(rng.integers(len(starts)))]
    ocell = support.cells[int(rng.integers(len(support.cells)))]
    objects = [
        ObjectInstance(1, goal.object_cls, ocell, taxonomy.OBJECTS[goal.object_cls],
                       "on_receptacle", support.id, True)
    ]
    others = [c for c in obj_classes if c != goal.object_cls]
    used = {ocell}
    for k in range(min(config.distractors, len(others))):
        ocls = str(rng.choice(others))
        others.remove(ocls)
        cands = [r for r in receptacles if r.cls != goal.start_cls] or receptacles
        r = cands[int(rng.integers(len(cands)))]
        free_cells = [c for c in r.cells if c not in used]
        if not free_cells:
            continue
        c = free_cells[int(rng.integers(len(free_cells)))]
        used.add(c)
        objects.append(
            ObjectInstance(len(objects) + 1, ocls, c, taxonomy.OBJECTS[ocls], "on_receptacle", r.id)
        )

    free = np.argwhere(cells == FREE)
    y, x = free[int(rng.integers(len(free)))]
    heading = int(rng.choice(HEADINGS))
    return Scene(
        cells,
        tuple(receptacles),
        tuple(objects),
        Pose(int(x), int(y), heading),
        goal,
        config.reach,
        config.view_angle,
        config.view_range,
    )


# ---- ray casting --------------------------------------------------------

def traversal(dx: int, dy: int) -> list[Cell]:
    """Cells whose open square the segment (0,0)->(dx,dy) crosses, endpoints excluded.

    Integer grid walk; when the segment passes exactly through a cell corner
    it steps diagonally without touching either side cell.
    """
    ax, ay = abs(dx), abs(dy)
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    x = y = 0
    i = j = 0  # boundaries crossed along x and y
    out = []
    while (x, y) != (dx, dy):
        if ay == 0:
            x += sx
        elif ax == 0:
            y += sy
        else:
            # next x boundary at t=(2i+1)/(2ax), next y boundary at t=(2j+1)/(2ay)
            tx = (2 * i + 1) * ay
            ty = (2 * j + 1) * ax
            if tx < ty:
                x += sx
                i += 1
            elif ty < tx:
                y += sy
                j += 1
            else:
                x += sx
                y += sy
                i += 1
                j += 1
        if (x, y) != (dx, dy):
            out.append((x, y))
    return out


def in_cone(dx: int, dy: int, heading: float, view_angle: float) -> bool:
    if dx == 0 and dy == 0:
        return True
    bearing = math.degrees(math.atan2(dy, dx))
    diff = (bearing - heading + 180.0) % 360.0 - 180.0
    return abs(diff) <= view_angle / 2.0 + 1e-9


@dataclass(frozen=True, eq=False)
class _RayTable:
    offsets: np.ndarray  # (n, 2)
    path: np.ndarray  # (n, L, 2), padded with (0, 0) = robot cell
    mask: np.ndarray  # (n, L)


@lru_cache(maxsize=64)
def _ray_table(heading: int, view_angle: float, view_range: int) -> _RayTable:
    offs, paths = [], []
    r = view_range
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dx * dx + dy * dy > r * r:
                continue
            if not in_cone(dx, dy, heading, view_angle):
                continue
            offs.append((dx, dy))
            paths.append(traversal(dx, dy))
    L = max(1, max(len(p) for p in paths))
    path = np.zeros((len(offs), L, 2), dtype=np.int64)
    mask = np.zeros((len(offs), L), dtype=bool)
    for k, p in enumerate(paths):
        if p:
            path[k, : len(p)] = p
            mask[k, : len(p)] = True
    return _RayTable(np.array(offs, dtype=np.int64), path, mask)


@dataclass(frozen=True, eq=False)
class Observation:
    """Ground-truth egocentric frame: visible cells with range, label and height."""

    pose: Pose
    xs: np.ndarray
    ys: np.ndarray
    kinds: np.ndarray
    distance: np.ndarray  # meters
    height: np.ndarray  # meters
    objects: tuple[ObjectInstance, ...]
    held: int | None = None
    last_event: Event = NO_EVENT

    def cell_set(self) -> set[Cell]:
        return set(zip(self.xs.tolist(), self.ys.tolist()))

    def label(self, k: int) -> str:
        return "free" if k == FREE else "wall" if k == WALL else "receptacle"


def visible_mask(scene: Scene, pose: Pose) -> tuple[np.ndarray, np.ndarray]:
    table = _ray_table(pose.heading, float(scene.view_angle), int(scene.view_range))
    tx = table.offsets[:, 0] + pose.x
    ty = table.offsets[:, 1] + pose.y
    inside = (tx >= 0) & (tx < scene.width) & (ty >= 0) & (ty < scene.height)
    tx, ty = tx[inside], ty[inside]
    px = table.path[inside, :, 0] + pose.x
    py = table.path[inside, :, 1] + pose.y
    mask = table.mask[inside]
    occ = scene.cells[py, px]
    target = scene.cells[ty, tx]
    # a receptacle does not hide its own surface
    blocks = (occ == WALL) | ((occ > 0) & (occ != target[:, None]))
    visible = ~np.any(blocks & mask, axis=1)
    return tx[visible], ty[visible]


def observe(scene: Scene, robot: RobotState, last_event: Event = NO_EVENT) -> Observation:
    xs, ys = visible_mask(scene, robot.pose)
    kinds = scene.cells[ys, xs].astype(int)
    dist = np.hypot(xs - robot.pose.x, ys - robot.pose.y) * taxonomy.CELL_METERS
    height = scene.heights[ys, xs]
    seen = set(zip(xs.tolist(), ys.tolist()))
    objs = tuple(o for o in scene.objects if o.cell is not None and o.state != "held" and o.cell in seen)
    return Observation(robot.pose, xs, ys, kinds, dist, height, objs, robot.held, last_event)


def is_visible(scene: Scene, pose: Pose, cell: Cell) -> bool:
    xs, ys = visible_mask(scene, pose)
    return bool(np.any((xs == cell[0]) & (ys == cell[1])))


# ---- dynamics -----------------------------------------------------------

def _dist(a: Cell, b: Cell) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _replace_object(scene: Scene, obj: ObjectInstance) -> Scene:
    return scene.with_objects(tuple(obj if o.id == obj.id else o for o in scene.objects))


def step(scene: Scene, robot: RobotState, action: Action) -> tuple[RobotState, Event, Scene]:
    pose = robot.pose
    kind = action.kind
    if kind == "move_forward":
        dx, dy = heading_step(pose.heading)
        target = (pose.x + dx, pose.y + dy)
        if not scene.is_free(target):
            return robot, Event("collision"), scene
        return dataclasses.replace(robot, pose=pose.moved_to(target)), NO_EVENT, scene
    if kind == "turn_left":
        return dataclasses.replace(robot, pose=pose.turned(30)), NO_EVENT, scene
    if kind == "turn_right":
        return dataclasses.replace(robot, pose=pose.turned(-30)), NO_EVENT, scene
    if kind == "stop":
        return robot, NO_EVENT, scene
    if kind == "pick":
        return _pick(scene, robot, action.target)
    if kind == "place":
        return _place(scene, robot, action.target, action.drop)
    raise InvalidAction(f"unknown action {kind!r}")


def _pick(scene, robot, target):
    if robot.held is not None:
        raise InvalidAction("pick while holding an object")
    if _dist(robot.pose.cell, target) > scene.reach:
        return robot, Event("pick_failure", reason="out_of_range"), scene
    if not is_visible(scene, robot.pose, target):
        return robot, Event("pick_failure", reason="not_visible"), scene
    obj = scene.goal_object
    if obj.cell != target or obj.state not in ("on_receptacle", "on_floor"):
        return robot, Event("pick_failure", reason="no_object"), scene
    held = dataclasses.replace(obj, cell=None, state="held", support=None)
    return (
        dataclasses.replace(robot, held=obj.id),
        Event("pick_success", object_id=obj.id),
        _replace_object(scene, held),
    )


def _place(scene, robot, target, drop):
    if robot.held is None:
        raise InvalidAction("place while not holding an object")
    obj = scene.object_by_id(robot.held)
    pose = robot.pose
    placeable = (
        scene.in_bounds(target)
        and _dist(pose.cell, target) <= scene.reach
        and is_visible(scene, pose, target)
    )
    rid = scene.kind_at(target) if placeable else FREE
    if rid > 0:
        if scene.edge_depth[target[1], target[0]] < scene.safe_depth(rid):
            fallen = dataclasses.replace(obj, cell=target, state="fallen", support=None)
            return (
                dataclasses.replace(robot, held=None),
                Event("place_fallen", object_id=obj.id),
                _replace_object(scene, fallen),
            )
        if obj.size == "large" and not drop:
            return robot, Event("place_collision", object_id=obj.id), scene
        rested = dataclasses.replace(obj, cell=target, state="on_receptacle", support=rid)
        return (
            dataclasses.replace(robot, held=None),
            Event("place_success", object_id=obj.id),
            _replace_object(scene, rested),
        )
    # released somewhere that is not a receptacle surface: it ends on the floor
    if placeable and scene.is_free(target):
        cell = target
        reason = "floor"
    else:
        dx, dy = heading_step(pose.heading)
        ahead = (pose.x + dx, pose.y + dy)
        cell = ahead if scene.is_free(ahead) else pose.cell
        reason = "unreachable"
    dropped = dataclasses.replace(obj, cell=cell, state="on_floor", support=None)
    return (
        dataclasses.replace(robot, held=None),
        Event("place_missed", object_id=obj.id, reason=reason),
        _replace_object(scene, dropped),
    )
