"""Wavefront distance fields, short-term goals, greedy action selection and the
oscillation guard.

Motion is 8-connected with step cost 1 (straight) and sqrt(2) (diagonal).
"""

from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from numba import njit

from .errors import NoGoals, Unreachable
from .world import (
    DIRS,
    MOVE_FORWARD,
    TURN_LEFT,
    TURN_RIGHT,
    Action,
    Cell,
    Pose,
    heading_octant,
)

SQRT2 = math.sqrt(2.0)
_SQRT2 = SQRT2


@dataclass(frozen=True, eq=False)
class DistanceField:
    dist: np.ndarray
    sources: frozenset[Cell]

    def at(self, cell: Cell) -> float:
        return float(self.dist[cell[1], cell[0]])


def inflate(obstacle: np.ndarray, cells: int) -> np.ndarray:
    if cells <= 0:
        return obstacle
    return ndimage.binary_dilation(obstacle, structure=np.ones((3, 3), bool), iterations=cells)


@njit(cache=True)
def _heap_push(keys, vals, n, k, v):
    i = n
    keys[i] = k
    vals[i] = v
    while i > 0:
        parent = (i - 1) >> 1
        if keys[parent] <= keys[i]:
            break
        keys[parent], keys[i] = keys[i], keys[parent]
        vals[parent], vals[i] = vals[i], vals[parent]
        i = parent
    return n + 1


@njit(cache=True)
def _heap_pop(keys, vals, n):
    k, v = keys[0], vals[0]
    n -= 1
    keys[0] = keys[n]
    vals[0] = vals[n]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= n:
            break
        child = left
        if left + 1 < n and keys[left + 1] < keys[left]:
            child = left + 1
        if keys[i] <= keys[child]:
            break
        keys[child], keys[i] = keys[i], keys[child]
        vals[child], vals[i] = vals[i], vals[child]
        i = child
    return k, v, n


@njit(cache=True)
def _wavefront(free, starts, stop):
    """Dijkstra from every start cell at once; a cell is pushed at most 8 times.

    When the flat index ``stop`` is popped the search ends early. Every cell
    strictly closer than it is final at that moment; the rest may hold
    overestimates.
    """
    h, w = free.shape
    dist = np.full((h, w), np.inf)
    cap = 8 * h * w + starts.shape[0] + 1
    keys = np.empty(cap)
    vals = np.empty(cap, np.int64)
    n = 0
    for k in range(starts.shape[0]):
        x, y = starts[k, 0], starts[k, 1]
        if dist[y, x] > 0.0:
            dist[y, x] = 0.0
            n = _heap_push(keys, vals, n, 0.0, y * w + x)
    while n > 0:
        d, i, n = _heap_pop(keys, vals, n)
        y = i // w
        x = i - y * w
        if d > dist[y, x]:
            continue
        if i == stop:
            break
        for dy in range(-1, 2):
            for dx in range(-1, 2):
                if dx == 0 and dy == 0:
                    continue
                nx = x + dx
                ny = y + dy
                if nx < 0 or ny < 0 or nx >= w or ny >= h or not free[ny, nx]:
                    continue
                nd = d + (_SQRT2 if dx != 0 and dy != 0 else 1.0)
                if nd < dist[ny, nx]:
                    dist[ny, nx] = nd
                    n = _heap_push(keys, vals, n, nd, ny * w + nx)
    return dist


def distance_field(obstacle: np.ndarray, goals, stop_at: Cell | None = None) -> DistanceField:
    """Multi-source shortest path lengths over non-obstacle cells.

    Goal cells sitting on obstacles are dropped; if none survive every cell
    is unreachable. With ``stop_at`` the search halts once that cell is
    settled, so only values below its distance are exact.
    """
    goals = frozenset((int(x), int(y)) for x, y in goals)
    if not goals:
        raise NoGoals("distance field needs at least one goal cell")
    h, w = obstacle.shape
    free = ~np.asarray(obstacle, dtype=bool)
    starts = np.array(
        sorted((x, y) for x, y in goals if 0 <= x < w and 0 <= y < h and free[y, x]),
        dtype=np.int64,
    ).reshape(-1, 2)
    stop = -1 if stop_at is None else int(stop_at[1]) * w + int(stop_at[0])
    return DistanceField(_wavefront(free, starts, stop), goals)


def octile(a: Cell, b: Cell) -> float:
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    return max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy)


def angle_diff(target_deg: float, heading: float) -> float:
    """Signed difference in (-180, 180]."""
    d = (target_deg - heading) % 360.0
    return d - 360.0 if d > 180.0 else d


def short_term_goal(field: DistanceField, pose: Pose, lookahead: int = 8) -> Cell:
    """Cell of least distance within ``lookahead`` (Euclidean) of the robot.

    Ties prefer the bearing closest to the current heading.
    """
    dist = field.dist
    if not math.isfinite(dist[pose.y, pose.x]):
        raise Unreachable(f"robot cell {pose.cell} cannot reach the goal")
    h, w = dist.shape
    r = lookahead
    y0, y1 = max(0, pose.y - r), min(h, pose.y + r + 1)
    x0, x1 = max(0, pose.x - r), min(w, pose.x + r + 1)
    sub = dist[y0:y1, x0:x1]
    yy, xx = np.mgrid[y0:y1, x0:x1]
    inside = (xx - pose.x) ** 2 + (yy - pose.y) ** 2 <= r * r
    vals = np.where(inside, sub, np.inf)
    best = vals.min()
    cand = np.argwhere(vals == best)
    if len(cand) == 1:
        cy, cx = cand[0]
        return (int(cx + x0), int(cy + y0))

    def key(c):
        x, y = int(c[1] + x0), int(c[0] + y0)
        if (x, y) == pose.cell:
            return (0.0, y, x)
        bearing = math.degrees(math.atan2(y - pose.y, x - pose.x))
        return (abs(angle_diff(bearing, pose.heading)), y, x)

    cy, cx = min(cand, key=key)
    return (int(cx + x0), int(cy + y0))


def turn_toward(pose: Pose, octants) -> Action:
    """MoveForward if the heading's octant is acceptable, else one 30 degree turn."""
    octants = set(octants)
    if heading_octant(pose.heading) in octants:
        return MOVE_FORWARD
    if not octants:
        return TURN_LEFT
    diffs = [angle_diff(o * 45.0, pose.heading) for o in sorted(octants)]
    best = min(diffs, key=lambda d: (abs(d), 0 if d > 0 else 1))
    return TURN_LEFT if best > 0 or best == 180.0 else TURN_RIGHT


def next_nav_action(pose: Pose, waypoint: Cell, obstacle: np.ndarray | None = None) -> Action:
    """Single step toward ``waypoint``: MoveForward when already facing a
    descent direction, otherwise one 30 degree turn.

    With an ``obstacle`` grid the descent directions come from a distance
    field grown from the waypoint over that grid, so walls between the robot
    and the waypoint are routed around. Without one (or when the waypoint is
    cut off) the octile metric is used, skipping known obstacle neighbours.
    """
    waypoint = (int(waypoint[0]), int(waypoint[1]))
    if waypoint == pose.cell:
        raise ValueError("waypoint equals the robot cell")
    if obstacle is not None:
        local = distance_field(obstacle, [waypoint], stop_at=pose.cell)
        octs = descent_octants(local, pose, obstacle)
        if octs:
            return turn_toward(pose, octs)
    scores = {}
    for o, (dx, dy) in enumerate(DIRS):
        n = (pose.x + dx, pose.y + dy)
        if obstacle is not None:
            h, w = obstacle.shape
            if not (0 <= n[0] < w and 0 <= n[1] < h) or obstacle[n[1], n[0]]:
                continue
        scores[o] = (SQRT2 if dx and dy else 1.0) + octile(n, waypoint)
    if not scores:
        return TURN_LEFT
    best = min(scores.values())
    return turn_toward(pose, [o for o, s in scores.items() if s <= best + 1e-9])


def descent_octants(field: DistanceField, pose: Pose, obstacle: np.ndarray | None = None) -> list[int]:
    """Neighbour directions that strictly decrease the distance field the most."""
    dist = field.dist
    h, w = dist.shape
    here = dist[pose.y, pose.x]
    vals = {}
    for o, (dx, dy) in enumerate(DIRS):
        nx, ny = pose.x + dx, pose.y + dy
        if not (0 <= nx < w and 0 <= ny < h):
            continue
        if obstacle is not None and obstacle[ny, nx]:
            continue
        v = dist[ny, nx]
        if math.isfinite(v) and v < here:
            vals[o] = v
    if not vals:
        return []
    best = min(vals.values())
    return [o for o, v in vals.items() if v <= best + 1e-9]


@dataclass
class NavHistory:
    """Recent poses toward the current goal plus the goal blacklist."""

    size: int = 20
    repeats: int = 3
    blacklist_steps: int = 50
    poses: deque = field(default_factory=deque)
    goal: object = None
    blacklist: dict = field(default_factory=dict)
    lifetime: Counter = field(default_factory=Counter)

    def is_blacklisted(self, goal, step: int) -> bool:
        expiry = self.blacklist.get(goal)
        return expiry is not None and step < expiry

    def active_blacklist(self, step: int) -> set:
        return {g for g, t in self.blacklist.items() if step < t}


def oscillation_check(history: NavHistory, pose: Pose, goal, step: int) -> str:
    """Record ``pose`` and decide whether to abandon ``goal`` for the frontier.

    Fires when a pose recurs ``repeats`` times within the last ``size``
    steps toward an unchanged goal, blacklisting the goal for
    ``blacklist_steps``. A (pose, goal) pair that has recurred
    ``repeats + 1`` times over the whole episode blacklists the goal for
    good, so no pair can ever exceed that count.
    """
    if goal != history.goal:
        history.goal = goal
        history.poses.clear()
    history.poses.append(pose)
    while len(history.poses) > history.size:
        history.poses.popleft()
    history.lifetime[(pose, goal)] += 1
    if history.lifetime[(pose, goal)] >= history.repeats + 1:
        history.blacklist[goal] = math.inf
        history.poses.clear()
        return "switch_to_frontier"
    if sum(1 for p in history.poses if p == pose) >= history.repeats:
        history.blacklist[goal] = step + history.blacklist_steps
        history.poses.clear()
        return "switch_to_frontier"
    return "continue"
