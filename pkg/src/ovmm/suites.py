"""Hand-scripted scenes: the failure-mode suites and the 12x12 golden scene.

Every suite holds 30 scenes built from a small template with seeded jitter,
plus the noise settings and the outcome it measures.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import taxonomy
from .config import AgentConfig, NoiseConfig
from .evaluation import EpisodeResult, run_episode
from .rng import substream
from .world import (
    FREE,
    WALL,
    EpisodeGoal,
    ObjectInstance,
    Pose,
    ReceptacleInstance,
    Scene,
    is_solvable,
    validate_scene,
)

SUITE_SIZE = 30


class SceneBuilder:
    """Walled rectangle with receptacles and objects added by hand."""

    def __init__(self, width: int, height: int):
        self.cells = np.full((height, width), FREE, dtype=np.int16)
        self.cells[0, :] = self.cells[-1, :] = WALL
        self.cells[:, 0] = self.cells[:, -1] = WALL
        self.receptacles: list[ReceptacleInstance] = []
        self.objects: list[ObjectInstance] = []

    def wall(self, x0: int, y0: int, x1: int, y1: int) -> "SceneBuilder":
        """Fill the inclusive rectangle with wall."""
        self.cells[y0 : y1 + 1, x0 : x1 + 1] = WALL
        return self

    def clear(self, x0: int, y0: int, x1: int, y1: int) -> "SceneBuilder":
        self.cells[y0 : y1 + 1, x0 : x1 + 1] = FREE
        return self

    def receptacle(self, cls: str, x: int, y: int, w: int = 1, h: int = 1) -> int:
        rid = len(self.receptacles) + 1
        cells = tuple((cx, cy) for cy in range(y, y + h) for cx in range(x, x + w))
        for cx, cy in cells:
            if self.cells[cy, cx] != FREE:
                raise ValueError(f"cell {(cx, cy)} is not free")
            self.cells[cy, cx] = rid
        self.receptacles.append(
            ReceptacleInstance(rid, cls, cells, taxonomy.surface_height(cls))
        )
        return rid

    def obj(self, cls: str, rid: int, cell, goal: bool = False) -> int:
        oid = len(self.objects) + 1
        size = taxonomy.OBJECTS[cls]
        self.objects.append(
            ObjectInstance(oid, cls, tuple(cell), size, "on_receptacle", rid, goal)
        )
        return oid

    def build(self, start: Pose, goal: EpisodeGoal) -> Scene:
        scene = Scene(self.cells.copy(), tuple(self.receptacles), tuple(self.objects), start, goal)
        validate_scene(scene)
        if not is_solvable(scene):
            raise ValueError("scripted scene is not solvable")
        return scene


def _fits(b: SceneBuilder, x: int, y: int, w: int, h: int, gap: int = 1) -> bool:
    H, W = b.cells.shape
    if x - gap < 1 or y - gap < 1 or x + w + gap > W - 1 or y + h + gap > H - 1:
        return False
    return bool((b.cells[y - gap : y + h + gap, x - gap : x + w + gap] == FREE).all())


def _drop_in(b: SceneBuilder, rng, cls: str, w: int, h: int, box) -> int:
    """Receptacle at a random free spot inside ``box`` = (x0, y0, x1, y1)."""
    x0, y0, x1, y1 = box
    for _ in range(200):
        x = int(rng.integers(x0, x1 - w + 2))
        y = int(rng.integers(y0, y1 - h + 2))
        if _fits(b, x, y, w, h):
            return b.receptacle(cls, x, y, w, h)
    raise ValueError(f"no room for a {w}x{h} {cls}")


def _free_start(b: SceneBuilder, rng, box) -> Pose:
    x0, y0, x1, y1 = box
    for _ in range(200):
        x = int(rng.integers(x0, x1 + 1))
        y = int(rng.integers(y0, y1 + 1))
        if b.cells[y, x] == FREE:
            return Pose(x, y, int(rng.integers(0, 12)) * 30)
    raise ValueError("no free start cell")


def two_room_scene(
    i: int,
    name: str,
    obj_cls: str,
    start: tuple[str, int, int],
    end: tuple[str, int, int],
) -> Scene:
    """Start receptacle and goal object in one room, end receptacle in the next.

    The rooms share a wall with a 3-cell doorway at a jittered height.
    """
    rng = substream(i, name)
    W, H = 30, 18
    b = SceneBuilder(W, H)
    wx = 14 + int(rng.integers(-1, 2))
    b.wall(wx, 1, wx, H - 2)
    door = int(rng.integers(3, H - 6))
    b.clear(wx, door, wx, door + 2)
    left, right = (1, 1, wx - 1, H - 2), (wx + 1, 1, W - 2, H - 2)
    if rng.random() < 0.5:
        left, right = right, left
    s_cls, sw, sh = start
    e_cls, ew, eh = end
    sid = _drop_in(b, rng, s_cls, sw, sh, left)
    cells = b.receptacles[sid - 1].cells
    b.obj(obj_cls, sid, cells[int(rng.integers(len(cells)))], goal=True)
    _drop_in(b, rng, e_cls, ew, eh, right)
    pose = _free_start(b, rng, left)
    return b.build(pose, EpisodeGoal(obj_cls, s_cls, e_cls))


def pocket_scene(i: int) -> Scene:
    """End receptacle set into a dividing wall above a walled alcove.

    The alcove's mouth is two cells wide, so obstacle inflation seals it
    while the free cells inside still count as goal cells; the only open
    route to the receptacle runs through a doorway at the far end of the
    wall. The object waits on a table just below the alcove.
    """
    rng = substream(i, "corridor")
    W, H = 28, 22
    b = SceneBuilder(W, H)
    dx = int(rng.integers(4, 10))
    b.wall(1, 9, W - 2, 9)
    b.clear(W - 6, 9, W - 4, 9)
    b.clear(dx + 3, 9, dx + 4, 9)
    b.receptacle("drawer", dx + 3, 9, 2, 1)
    b.wall(dx, 10, dx, 15)
    b.wall(dx + 7, 10, dx + 7, 15)
    b.wall(dx, 15, dx + 7, 15)
    g = dx + 3 + int(rng.integers(-1, 2))
    b.clear(g, 15, g + 1, 15)
    tx = dx + int(rng.integers(-2, 5))
    t = b.receptacle("table", tx, 18, 3, 2)
    b.obj("cup", t, (tx + 1, 18), goal=True)
    pose = Pose(int(rng.integers(3, W - 3)), 4, int(rng.integers(0, 12)) * 30)
    return b.build(pose, EpisodeGoal("cup", "table", "drawer"))


# ---- outcome probes over an episode trace ------------------------------------

def floor_goal_selected(res: EpisodeResult) -> bool:
    return any(r["goal_floor"] for r in res.trace)


def navigated_empty_handed(res: EpisodeResult) -> bool:
    return any(
        r["held"] is None and "NavigateToEndReceptacle" in (*r.get("via", ()), r["phase"])
        for r in res.trace
    )


def object_fell(res: EpisodeResult) -> bool:
    return res.events.get("place_fallen", 0) > 0


def budget_in_navigation(res: EpisodeResult) -> bool:
    return res.termination == "Budget" and res.final_phase.startswith("Navigate")


def place_collided(res: EpisodeResult) -> bool:
    return res.events.get("place_collision", 0) > 0


def max_pose_goal_repeats(res: EpisodeResult) -> int:
    """Largest number of steps any (pose, goal) pair was seen in a Navigate phase."""
    c = Counter(
        ((r["x"], r["y"], r["heading"]), tuple(r["goal"]) if r["goal"] else None)
        for r in res.trace
        if r["phase"].startswith("Navigate")
    )
    return max(c.values(), default=0)


@dataclass
class FailureSuite:
    name: str
    flag: str
    build: Callable[[int], Scene]
    outcome: Callable[[EpisodeResult], bool]
    noise: NoiseConfig = field(default_factory=lambda: NoiseConfig(p_miss=0.0, p_confuse=0.0, p_floor_fp=0.0))
    budget: int = 800

    def scenes(self, n: int = SUITE_SIZE) -> list[Scene]:
        return [self.build(i) for i in range(n)]

    def run(self, config: AgentConfig, n: int = SUITE_SIZE) -> list[EpisodeResult]:
        return [
            run_episode(i, agent_config=config, noise=self.noise, budget=self.budget, scene=s, trace=True)
            for i, s in enumerate(self.scenes(n))
        ]

    def ablate(self, n: int = SUITE_SIZE, base: AgentConfig | None = None) -> dict[str, list[EpisodeResult]]:
        """Results with every flag on, and with only this suite's flag switched off."""
        base = base or AgentConfig.uniteam()
        return {
            "on": self.run(base, n),
            "off": self.run(base.with_flags(**{self.flag: False}), n),
        }


def _height_suite() -> FailureSuite:
    return FailureSuite(
        "height",
        "height_filter",
        lambda i: two_room_scene(i, "height", "cup", ("table", 3, 3), ("counter", 3, 4)),
        floor_goal_selected,
        NoiseConfig(
            p_miss=0.0,
            p_confuse=0.0,
            p_floor_fp=0.5,
            floor_fp_classes=("table", "counter"),
            floor_conf=(0.6, 0.9),
        ),
    )


SUITES: dict[str, FailureSuite] = {
    "height": _height_suite(),
    "pick": FailureSuite(
        "pick",
        "pick_verify",
        lambda i: two_room_scene(i, "pick", "bowl", ("counter", 3, 4), ("table", 3, 3)),
        navigated_empty_handed,
    ),
    "edge": FailureSuite(
        "edge",
        "edge_safe_placement",
        lambda i: two_room_scene(i, "edge", "book", ("cabinet", 2, 2), ("bed", 4, 5)),
        object_fell,
    ),
    "corridor": FailureSuite(
        "corridor",
        "oscillation_guard",
        pocket_scene,
        budget_in_navigation,
    ),
    "drop": FailureSuite(
        "drop",
        "drop_from_height",
        lambda i: two_room_scene(
            i, "drop", ("backpack", "box")[i % 2], ("sofa", 3, 3), ("table", 4, 5)
        ),
        place_collided,
    ),
}


def golden_scene() -> Scene:
    """12x12 room: a cup on a chair, a table hidden behind a partition.

    ::

        ############
        #..........#
        #..>.....H.#     robot at (3, 2) facing 180 degrees, chair H at (9, 2)
        #..........#
        #..........#
        #..........#
        ########...#     partition y = 6, x = 1..7
        #..........#
        #..........#
        #.TT.......#     table at (2..3, 9)
        #..........#
        ############

    With noiseless perception and the full agent the episode runs in
    ``GOLDEN_STEPS`` actions, split across the phases as ``GOLDEN_PHASES``:

    * FindObject, 12: the opening in-place scan of twelve 30-degree left
      turns always runs to completion, even though the cup shows up halfway.
    * NavigateToObject, 9: six left turns from 180 back round to 0, then three
      forward steps east to (6, 2), the first cell within the 3-cell stopping
      distance of the cup.
    * PickObject, 1: the cup is dead ahead and visible, so the pick succeeds.
    * FindEndReceptacle, 17: frontier exploration around the chair and down
      the gap at x = 8..10 until the table enters view from (8, 6).
    * NavigateToEndReceptacle, 2: two diagonal steps to (5, 9), within
      placement reach of the table.
    * PlaceObject, 3: one turn to bring the table centre into the cone,
      the place action, and Stop.
    """
    b = SceneBuilder(12, 12)
    b.wall(1, 6, 7, 6)
    chair = b.receptacle("chair", 9, 2)
    b.obj("cup", chair, (9, 2), goal=True)
    b.receptacle("table", 2, 9, 2, 1)
    return b.build(Pose(3, 2, 180), EpisodeGoal("cup", "chair", "table"))


GOLDEN_NOISE = NoiseConfig(p_miss=0.0, p_confuse=0.0, p_floor_fp=0.0)
GOLDEN_PHASES = (
    ("FindObject", 12),
    ("NavigateToObject", 9),
    ("PickObject", 1),
    ("FindEndReceptacle", 17),
    ("NavigateToEndReceptacle", 2),
    ("PlaceObject", 3),
)
GOLDEN_STEPS = sum(n for _, n in GOLDEN_PHASES)


def run_golden(trace: bool = True) -> EpisodeResult:
    return run_episode(
        0, agent_config=AgentConfig.uniteam(), noise=GOLDEN_NOISE, scene=golden_scene(), trace=trace
    )
