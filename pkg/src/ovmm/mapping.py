"""Bird's-eye-view semantic belief map, frontiers and goal maps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage

from .errors import UnknownCluster
from .world import FREE, Cell, Observation, Pose, heading_octant, traversal

FOUR = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
SQRT2 = math.sqrt(2.0)


@dataclass
class Cluster:
    id: int
    cls: str
    cells: frozenset[Cell]
    prob: float
    inspected: bool = False
    viewed_sides: set[int] = field(default_factory=set)

    @property
    def centroid(self) -> tuple[float, float]:
        xs = [c[0] for c in self.cells]
        ys = [c[1] for c in self.cells]
        return (sum(xs) / len(xs), sum(ys) / len(ys))


def side_of(centroid: tuple[float, float], cell: Cell) -> int:
    """Octant (0..7) of ``cell`` as seen from a cluster centroid."""
    dx, dy = cell[0] - centroid[0], cell[1] - centroid[1]
    if dx == 0 and dy == 0:
        return 0
    return heading_octant(math.degrees(math.atan2(dy, dx)) % 360.0)


class SemanticMap:
    def __init__(self, width: int, height: int, classes: tuple[str, ...], fusion: str = "max"):
        shape = (height, width)
        self.width, self.height = width, height
        self.obstacle = np.zeros(shape, dtype=bool)
        self.explored = np.zeros(shape, dtype=bool)
        self.collision_marks = np.zeros(shape, dtype=bool)
        self.classes = tuple(dict.fromkeys(classes))
        self.class_prob = {c: np.zeros(shape, dtype=float) for c in self.classes}
        self._counts = {c: np.zeros(shape, dtype=np.int32) for c in self.classes}
        self._cluster_grid = {c: np.zeros(shape, dtype=np.int32) for c in self.classes}
        self.clusters: dict[int, Cluster] = {}
        self.fusion = fusion
        self._next_id = 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.obstacle.shape

    def copy(self) -> "SemanticMap":
        out = SemanticMap(self.width, self.height, self.classes, self.fusion)
        out.obstacle = self.obstacle.copy()
        out.explored = self.explored.copy()
        out.collision_marks = self.collision_marks.copy()
        out.class_prob = {c: a.copy() for c, a in self.class_prob.items()}
        out._counts = {c: a.copy() for c, a in self._counts.items()}
        out._cluster_grid = {c: a.copy() for c, a in self._cluster_grid.items()}
        out.clusters = {
            k: Cluster(v.id, v.cls, v.cells, v.prob, v.inspected, set(v.viewed_sides))
            for k, v in self.clusters.items()
        }
        out._next_id = self._next_id
        return out

    def sight_blockers(self) -> np.ndarray:
        """Obstacle cells with no semantic label (walls, unlabelled clutter)."""
        labelled = np.zeros(self.shape, dtype=bool)
        for p in self.class_prob.values():
            labelled |= p > 0
        return self.obstacle & ~labelled

    def clusters_of(self, cls: str) -> list[Cluster]:
        return [c for c in self.clusters.values() if c.cls == cls]

    def cluster_at(self, cls: str, cell: Cell) -> Cluster | None:
        grid = self._cluster_grid.get(cls)
        if grid is None:
            return None
        cid = int(grid[cell[1], cell[0]])
        return self.clusters.get(cid) if cid else None

    # ---- updates --------------------------------------------------------
    def integrate(self, pose: Pose, obs: Observation, detections) -> "SemanticMap":
        """Fuse one frame. Mutates and returns ``self``."""
        xs, ys = obs.xs, obs.ys
        self.explored[ys, xs] = True
        self.explored[pose.y, pose.x] = True
        solid = obs.kinds != FREE
        self.obstacle[ys[solid], xs[solid]] = True

        touched = set()
        for d in detections:
            prob = self.class_prob.get(d.cls)
            if prob is None:
                continue
            cx = np.fromiter((c[0] for c in d.cells), dtype=np.int64, count=len(d.cells))
            cy = np.fromiter((c[1] for c in d.cells), dtype=np.int64, count=len(d.cells))
            old_support = prob[cy, cx] > 0
            if self.fusion == "max":
                prob[cy, cx] = np.maximum(prob[cy, cx], d.confidence)
            else:
                # running mean over the frames that detected the cell
                n = self._counts[d.cls]
                n[cy, cx] += 1
                prob[cy, cx] += (d.confidence - prob[cy, cx]) / n[cy, cx]
            if not np.all(old_support):
                touched.add(d.cls)
            else:
                for cid in np.unique(self._cluster_grid[d.cls][cy, cx]).tolist():
                    cl = self.clusters[cid]
                    cl.prob = float(prob[tuple(zip(*cl.cells))[::-1]].max())
        for cls in self.classes:
            if cls in touched:
                self._rebuild(cls)

        in_view = set()
        for cls in self.classes:
            ids = self._cluster_grid[cls][ys, xs]
            in_view.update(int(i) for i in np.unique(ids[ids > 0]))
        for cid in sorted(in_view):
            cl = self.clusters[cid]
            cl.viewed_sides.add(side_of(cl.centroid, pose.cell))
            if not cl.inspected and len(cl.viewed_sides) >= 2 and all(
                self.explored[y, x] for x, y in cl.cells
            ):
                cl.inspected = True
        return self

    def _rebuild(self, cls: str) -> None:
        prob = self.class_prob[cls]
        labels, n = ndimage.label(prob > 0, structure=FOUR)
        old_grid = self._cluster_grid[cls]
        new_grid = np.zeros_like(old_grid)
        old_ids = {cid for cid, c in self.clusters.items() if c.cls == cls}
        kept: dict[int, Cluster] = {}
        for lab in range(1, n + 1):
            mask = labels == lab
            ys, xs = np.nonzero(mask)
            cells = frozenset(zip(xs.tolist(), ys.tolist()))
            parents = sorted(int(i) for i in np.unique(old_grid[mask]) if i > 0)
            p = float(prob[mask].max())
            if parents:
                cid = parents[0]
                sides = set().union(*(self.clusters[i].viewed_sides for i in parents))
                inspected = any(self.clusters[i].inspected for i in parents)
                kept[cid] = Cluster(cid, cls, cells, p, inspected, sides)
            else:
                cid = self._next_id
                self._next_id += 1
                kept[cid] = Cluster(cid, cls, cells, p)
            new_grid[mask] = cid
        for cid in old_ids:
            self.clusters.pop(cid, None)
        self.clusters.update(kept)
        self.clusters = dict(sorted(self.clusters.items()))
        self._cluster_grid[cls] = new_grid

    def mark_collision(self, short_term_goal: Cell | None, ahead: Cell | None = None) -> "SemanticMap":
        for cell in (short_term_goal, ahead):
            if cell is None:
                continue
            x, y = cell
            if 0 <= x < self.width and 0 <= y < self.height:
                self.collision_marks[y, x] = True
                self.obstacle[y, x] = True
        return self

    def mark_inspected(self, cluster_id: int) -> "SemanticMap":
        if cluster_id not in self.clusters:
            raise UnknownCluster(f"no cluster {cluster_id}")
        self.clusters[cluster_id].inspected = True
        return self


def frontier(smap: SemanticMap) -> np.ndarray:
    """Boolean grid of explored, non-obstacle cells with an unexplored 4-neighbour."""
    unexplored = ~smap.explored
    near = np.zeros_like(unexplored)
    near[1:, :] |= unexplored[:-1, :]
    near[:-1, :] |= unexplored[1:, :]
    near[:, 1:] |= unexplored[:, :-1]
    near[:, :-1] |= unexplored[:, 1:]
    return smap.explored & ~smap.obstacle & near


@dataclass
class GoalMap:
    # goal cell -> source cluster id (None for frontier cells)
    cells: dict[Cell, int | None] = field(default_factory=dict)
    sides: dict[Cell, int] = field(default_factory=dict)
    chosen_goal: Cell | None = None
    chosen_cluster: int | None = None

    def __bool__(self) -> bool:
        return bool(self.cells)

    def mask(self, shape) -> np.ndarray:
        m = np.zeros(shape, dtype=bool)
        for x, y in self.cells:
            m[y, x] = True
        return m


def build_goal_map(
    smap: SemanticMap,
    target: str,
    cls: str,
    blacklist: set[int] | frozenset[int] = frozenset(),
    radius: int = 2,
) -> GoalMap:
    """Goal cells for ``target`` in {"object", "inspection", "end_receptacle"}.

    Inspection goals are explored free cells within ``radius`` (Chebyshev)
    of an uninspected cluster of ``cls``, minus the approach sides already
    viewed. Object and end-receptacle goals are the cluster cells.
    """
    gm = GoalMap()
    clusters = [c for c in smap.clusters_of(cls) if c.id not in blacklist]
    if target == "inspection":
        free = smap.explored & ~smap.obstacle
        for cl in clusters:
            if cl.inspected:
                continue
            cen = cl.centroid
            near: set[Cell] = set()
            for x, y in cl.cells:
                for j in range(-radius, radius + 1):
                    for i in range(-radius, radius + 1):
                        n = (x + i, y + j)
                        if 0 <= n[0] < smap.width and 0 <= n[1] < smap.height and free[n[1], n[0]]:
                            near.add(n)
            for n in sorted(near, key=lambda c: (c[1], c[0])):
                side = side_of(cen, n)
                if side in cl.viewed_sides or n in gm.cells:
                    continue
                gm.cells[n] = cl.id
                gm.sides[n] = side
    elif target in ("object", "end_receptacle"):
        for cl in clusters:
            for c in sorted(cl.cells, key=lambda c: (c[1], c[0])):
                gm.cells[c] = cl.id
    else:
        raise ValueError(f"unknown goal target {target!r}")
    return gm


_walk = lru_cache(maxsize=4096)(lambda dx, dy: tuple(traversal(dx, dy)))


def line_clear(blocked: np.ndarray, a: Cell, b: Cell) -> bool:
    """True when no ``blocked`` cell lies strictly between ``a`` and ``b``."""
    ax, ay = a
    for ox, oy in _walk(b[0] - ax, b[1] - ay):
        if blocked[ay + oy, ax + ox]:
            return False
    return True


def standing_cells(
    obstacle: np.ndarray, cell: Cell, radius: float, blocked: np.ndarray | None = None
) -> list[Cell]:
    """Free cells within ``radius`` of ``cell``, in (y, x) order.

    With ``blocked`` given, a cell only counts when the straight line to
    ``cell`` crosses no blocked cell.
    """
    x, y = cell
    h, w = obstacle.shape
    r = int(math.floor(radius))
    out = []
    for ny in range(max(0, y - r), min(h, y + r + 1)):
        for nx in range(max(0, x - r), min(w, x + r + 1)):
            if obstacle[ny, nx] or math.hypot(nx - x, ny - y) > radius:
                continue
            if blocked is not None and not line_clear(blocked, (nx, ny), cell):
                continue
            out.append((nx, ny))
    return out


def cell_distance(
    dist: np.ndarray,
    obstacle: np.ndarray,
    cell: Cell,
    radius: float = 1.5,
    blocked: np.ndarray | None = None,
) -> float:
    """Path length from the field's source to ``cell``.

    Obstacle cells are reached by standing on a free cell within ``radius``
    (Euclidean) of them; the straight-line remainder is added.
    """
    x, y = cell
    if not obstacle[y, x]:
        return float(dist[y, x])
    best = math.inf
    for nx, ny in standing_cells(obstacle, cell, radius, blocked):
        best = min(best, float(dist[ny, nx]) + math.hypot(nx - x, ny - y))
    return best


def select_goal(
    goal_map: GoalMap,
    smap: SemanticMap,
    dist: np.ndarray,
    mode: str = "improved",
    center: bool | None = None,
    obstacle: np.ndarray | None = None,
    approach_radius: float = 1.5,
    blocked: np.ndarray | None = None,
) -> tuple[Cell, int] | None:
    """Choose a goal cell and its cluster.

    ``dist`` is a distance field grown from the robot's cell. ``improved``
    picks the reachable cluster with the highest probability (ties: nearer,
    then lower id); ``baseline`` picks the nearest reachable goal cell. With
    ``center`` the returned cell is the cluster's reachable cell closest to
    its centroid, otherwise the nearest one. ``center`` defaults to
    ``mode == "improved"``.
    """
    if center is None:
        center = mode == "improved"
    obstacle = smap.obstacle if obstacle is None else obstacle
    reach: dict[int, list[tuple[float, Cell]]] = {}
    for cell, cid in goal_map.cells.items():
        d = cell_distance(dist, obstacle, cell, approach_radius, blocked)
        if math.isfinite(d):
            reach.setdefault(cid, []).append((d, cell))
    if not reach:
        return None

    def nearest(cid):
        return min(reach[cid], key=lambda t: (t[0], t[1][1], t[1][0]))

    if mode == "improved":
        def key(cid):
            p = smap.clusters[cid].prob if cid in smap.clusters else 0.0
            return (-p, nearest(cid)[0], cid)
        cid = min(reach, key=key)
    elif mode == "baseline":
        cid = min(reach, key=lambda c: (nearest(c)[0], c if c is not None else -1))
    else:
        raise ValueError(f"unknown selection mode {mode!r}")

    if center and cid in smap.clusters:
        cx, cy = smap.clusters[cid].centroid
        d, cell = min(
            reach[cid],
            key=lambda t: ((t[1][0] - cx) ** 2 + (t[1][1] - cy) ** 2, t[0], t[1][1], t[1][0]),
        )
    else:
        d, cell = nearest(cid)
    goal_map.chosen_goal = cell
    goal_map.chosen_cluster = cid
    return cell, cid
