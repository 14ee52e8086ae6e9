"""Six-phase heuristic skill machine with per-improvement ablation flags."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import taxonomy
from .config import AgentConfig
from .errors import ConfigError
from .mapping import GoalMap, SemanticMap, build_goal_map, frontier, select_goal, standing_cells
from .perception import Detection, agent_filter
from .planning import (
    NavHistory,
    angle_diff,
    distance_field,
    inflate,
    next_nav_action,
    oscillation_check,
    short_term_goal,
)
from .world import (
    MOVE_FORWARD,
    STOP,
    TURN_LEFT,
    TURN_RIGHT,
    Action,
    Cell,
    EpisodeGoal,
    Observation,
    Pose,
    heading_step,
    pick,
    place,
)

FIND_OBJECT = "FindObject"
NAV_TO_OBJECT = "NavigateToObject"
PICK_OBJECT = "PickObject"
FIND_END = "FindEndReceptacle"
NAV_TO_END = "NavigateToEndReceptacle"
PLACE_OBJECT = "PlaceObject"
PHASES = (FIND_OBJECT, NAV_TO_OBJECT, PICK_OBJECT, FIND_END, NAV_TO_END, PLACE_OBJECT)

TRANSITIONS = {
    (FIND_OBJECT, NAV_TO_OBJECT),
    (NAV_TO_OBJECT, PICK_OBJECT),
    (PICK_OBJECT, FIND_END),
    (PICK_OBJECT, NAV_TO_END),
    (PICK_OBJECT, FIND_OBJECT),  # failed-pick reversion
    (FIND_END, NAV_TO_END),
    (NAV_TO_END, PLACE_OBJECT),
}

SCAN_TURNS = 12


def legal_phase_path(phases) -> bool:
    prev = None
    for p in phases:
        if prev is not None and p != prev and (prev, p) not in TRANSITIONS:
            return False
        prev = p
    return True


@dataclass
class SkillState:
    phase: str = FIND_OBJECT
    scan_turns_remaining: int = SCAN_TURNS
    step: int = 0
    history: NavHistory = field(default_factory=NavHistory)
    held: int | None = None
    believes_holding: bool = False
    # picking
    pick_target: Cell | None = None
    pick_cluster: int | None = None
    pick_scan_plan: list[str] = field(default_factory=list)
    pick_issued: bool = False
    pick_attempts: int = 0
    pick_faced: bool = False
    pick_failed: set = field(default_factory=set)
    # navigation bookkeeping
    last_short_term_goal: Cell | None = None
    chosen_goal: Cell | None = None
    chosen_cluster: int | None = None
    goal_source: str | None = None
    # placing
    place_cluster: int | None = None
    place_cell: Cell | None = None
    approach_step_count: int = 0
    open_loop_moves: int | None = None
    place_issued: bool = False
    done: bool = False
    # phases left during the current step, oldest first
    passed: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not 0 <= self.scan_turns_remaining <= SCAN_TURNS:
            raise ValueError("scan_turns_remaining must lie in [0, 12]")


class HeuristicAgent:
    """One agent per episode. Call :meth:`reset`, then :meth:`act` once per frame."""

    def __init__(self, goal: EpisodeGoal, config: AgentConfig | None = None, width: int = 48, height: int = 48):
        self.config = config or AgentConfig()
        self.width, self.height = width, height
        self.goal = goal
        self.reset(goal, self.config)

    def reset(self, goal: EpisodeGoal, config: AgentConfig | None = None) -> SkillState:
        config = config or self.config
        if not taxonomy.is_object_class(goal.object_cls):
            raise ConfigError(f"unknown object class {goal.object_cls!r}")
        for c in (goal.start_cls, goal.end_cls):
            if not taxonomy.is_receptacle_class(c):
                raise ConfigError(f"unknown receptacle class {c!r}")
        self.goal, self.config = goal, config
        self.map = SemanticMap(self.width, self.height, goal.classes())
        # most recent goal map handed to the planner, kept for rendering
        self.last_goal_map = GoalMap()
        self._cache: dict = {}
        self.state = SkillState(
            history=NavHistory(config.history, config.repeats, config.blacklist_steps)
        )
        self.detections: list[Detection] = []
        self.large = taxonomy.OBJECTS[goal.object_cls] == "large"
        return self.state

    # ---- main entry -----------------------------------------------------
    def act(self, obs: Observation, raw_detections: list[Detection]) -> Action:
        st, cfg = self.state, self.config
        pose = obs.pose
        self.obs = obs
        self.detections = agent_filter(raw_detections, self.goal, cfg)
        ev = obs.last_event

        if ev.kind == "collision" and cfg.collision_marking:
            dx, dy = heading_step(pose.heading)
            self.map.mark_collision(st.last_short_term_goal, (pose.x + dx, pose.y + dy))
        if ev.kind == "pick_success":
            st.held = ev.object_id
        elif ev.kind in ("place_success", "place_fallen", "place_missed"):
            st.held = None

        self.map.integrate(pose, obs, self.detections)
        # fields derived from the map only; valid until the next integrate
        self._cache = {}
        st.chosen_goal = st.chosen_cluster = st.goal_source = None
        st.passed = []

        if st.done:
            action = STOP
        elif st.scan_turns_remaining > 0:
            st.scan_turns_remaining -= 1
            action = TURN_LEFT
        else:
            action = self._dispatch(pose)
        st.step += 1
        return action

    def _dispatch(self, pose: Pose) -> Action:
        # a phase handler may hand control to the next phase within one step
        for _ in range(len(PHASES) + 1):
            phase = self.state.phase
            action = getattr(self, "_" + phase)(pose)
            if action is not None:
                return action
            if self.state.phase == phase:
                break
        return TURN_LEFT

    def _goto(self, phase: str) -> None:
        self.state.passed.append(self.state.phase)
        self.state.phase = phase

    # ---- shared navigation ---------------------------------------------
    def _blacklist(self) -> set:
        return self.state.history.active_blacklist(self.state.step)

    def _cached(self, key, make):
        if key not in self._cache:
            self._cache[key] = make()
        return self._cache[key]

    def _pose_field(self, pose: Pose):
        return self._cached(("pose", pose.cell), lambda: distance_field(self.map.obstacle, [pose.cell]))

    def _plan_step(self, pose: Pose, goal_cells) -> tuple[Action | None, bool]:
        """Return (action, arrived). ``action`` is None when unreachable."""
        obstacle = self.map.obstacle
        blocked = self._cached("blocked", self.map.sight_blockers)
        sources = []
        for x, y in goal_cells:
            if not obstacle[y, x]:
                sources.append((x, y))
            else:
                sources.extend(standing_cells(obstacle, (x, y), self.config.nav_stop, blocked))
        if not sources:
            return None, False
        plan = self._cached("inflated", lambda: inflate(obstacle, self.config.inflation))
        field = distance_field(plan, sources)
        if not math.isfinite(field.at(pose.cell)):
            plan = obstacle
            field = distance_field(obstacle, sources)
            if not math.isfinite(field.at(pose.cell)):
                return None, False
        if field.at(pose.cell) == 0:
            return None, True
        stg = short_term_goal(field, pose, self.config.lookahead)
        self.state.last_short_term_goal = stg
        if stg == pose.cell:
            return None, True
        return next_nav_action(pose, stg, plan), False

    def _explore(self, pose: Pose, source: str = "frontier") -> Action:
        """Head for the nearest reachable, non-blacklisted frontier cell."""
        st = self.state
        fr = frontier(self.map)
        bl = self._blacklist()
        ys, xs = np.nonzero(fr)
        cells = [(int(x), int(y)) for x, y in zip(xs, ys) if ("frontier", (int(x), int(y))) not in bl]
        if cells:
            pf = self._pose_field(pose).dist
            best = min(cells, key=lambda c: (pf[c[1], c[0]], c[1], c[0]))
            if math.isfinite(pf[best[1], best[0]]):
                goal_id = ("frontier", best)
                st.chosen_goal, st.goal_source = best, source
                self.last_goal_map = GoalMap(dict.fromkeys(cells), chosen_goal=best)
                if best == pose.cell:
                    return TURN_LEFT
                if self.config.oscillation_guard and st.phase in (NAV_TO_OBJECT, NAV_TO_END):
                    if oscillation_check(st.history, pose, goal_id, st.step) == "switch_to_frontier":
                        return TURN_LEFT
                action, arrived = self._plan_step(pose, [best])
                if action is not None:
                    return action
                return TURN_LEFT
        if all(math.isinf(st.history.blacklist[g]) for g in bl):
            # nothing left to explore and nothing waiting to be retried
            st.done = True
            return STOP
        return TURN_LEFT

    def _pursue(self, pose: Pose, gm: GoalMap, mode: str, center: bool):
        """Select a goal from ``gm`` and take one step toward it.

        Returns (action, arrived, choice) where ``choice`` is (cell, cluster)
        or None when nothing in the goal map is reachable.
        """
        st = self.state
        if not gm:
            return None, False, None
        pf = self._pose_field(pose)
        choice = select_goal(
            gm, self.map, pf.dist, mode, center,
            approach_radius=self.config.nav_stop, blocked=self._cached("blocked", self.map.sight_blockers),
        )
        if choice is None:
            return None, False, None
        cell, cid = choice
        st.chosen_goal, st.chosen_cluster = cell, cid
        gm.chosen_goal, gm.chosen_cluster = cell, cid
        self.last_goal_map = gm
        if self.config.oscillation_guard and st.phase in (NAV_TO_OBJECT, NAV_TO_END):
            if oscillation_check(st.history, pose, cid, st.step) == "switch_to_frontier":
                return self._explore(pose, "frontier"), False, choice
        action, arrived = self._plan_step(pose, [cell])
        if arrived:
            return None, True, choice
        if action is None:
            return None, False, None
        return action, False, choice

    def _select_mode(self) -> str:
        return "improved" if self.config.prob_goal_selection else "baseline"

    def _object_goal_map(self) -> GoalMap:
        return build_goal_map(self.map, "object", self.goal.object_cls, self._blacklist())

    # ---- phases ---------------------------------------------------------
    def _FindObject(self, pose: Pose) -> Action | None:
        st = self.state
        if self._object_goal_map():
            self._goto(NAV_TO_OBJECT)
            return None
        bl = self._blacklist()
        gm = build_goal_map(self.map, "inspection", self.goal.start_cls, bl)
        if gm:
            action, arrived, choice = self._pursue(pose, gm, self._select_mode(), False)
            if choice is not None:
                st.goal_source = "inspection"
                if arrived:
                    cx, cy = self.map.clusters[choice[1]].centroid
                    bearing = math.degrees(math.atan2(cy - pose.y, cx - pose.x))
                    if abs(angle_diff(bearing, pose.heading)) <= 30:
                        # looked from here and still a goal: give this side up
                        self.map.clusters[choice[1]].viewed_sides.add(gm.sides[choice[0]])
                        return TURN_LEFT
                    return TURN_LEFT if angle_diff(bearing, pose.heading) > 0 else TURN_RIGHT
                return action
        return self._explore(pose)

    def _NavigateToObject(self, pose: Pose) -> Action | None:
        st = self.state
        gm = self._object_goal_map()
        action, arrived, choice = self._pursue(pose, gm, self._select_mode(), False)
        if choice is None:
            return self._explore(pose)
        st.goal_source = "object"
        if arrived:
            cell, cid = choice
            st.pick_target, st.pick_cluster = self._best_cell(cid), cid
            st.pick_scan_plan = (
                ["turn_left"] * self.config.pick_scan_left + ["turn_right"] * self.config.pick_scan_right
                if self.config.pick_retry
                else []
            )
            st.pick_issued = False
            st.pick_attempts = 0
            st.pick_faced = False
            st.pick_failed = set()
            self._goto(PICK_OBJECT)
            return None
        return action

    def _best_cell(self, cid: int) -> Cell:
        cl = self.map.clusters[cid]
        prob = self.map.class_prob[cl.cls]
        return max(sorted(cl.cells, key=lambda c: (c[1], c[0])), key=lambda c: prob[c[1], c[0]])

    def _object_in_view(self) -> Cell | None:
        dets = [d for d in self.detections if d.cls == self.goal.object_cls]
        if not dets:
            return None
        d = max(dets, key=lambda d: d.confidence)
        return d.cells[0]

    def _PickObject(self, pose: Pose) -> Action | None:
        st, cfg = self.state, self.config
        ev = self.obs.last_event
        if st.pick_issued:
            st.pick_issued = False
            if not cfg.pick_verify or ev.kind == "pick_success":
                st.believes_holding = True
                ends = build_goal_map(self.map, "end_receptacle", self.goal.end_cls, self._blacklist())
                self._goto(NAV_TO_END if ends else FIND_END)
                return None
            if ev.kind == "pick_failure" and ev.reason != "not_visible":
                st.pick_failed.add(st.pick_target)
        if st.pick_attempts == 0:
            return self._issue_pick(st.pick_target)
        if cfg.pick_retry:
            sight = self._object_in_view()
            if sight is not None and sight not in st.pick_failed:
                return self._issue_pick(sight)
            if not st.pick_faced:
                # swing back toward where the object was last believed to be
                tx, ty = st.pick_target
                err = angle_diff(math.degrees(math.atan2(ty - pose.y, tx - pose.x)), pose.heading)
                if abs(err) > 30:
                    return TURN_LEFT if err > 0 else TURN_RIGHT
                st.pick_faced = True
            if st.pick_scan_plan:
                turn = st.pick_scan_plan.pop(0)
                return TURN_LEFT if turn == "turn_left" else TURN_RIGHT
        # retries exhausted: give up on this location and look elsewhere
        if st.pick_cluster in self.map.clusters:
            self.map.mark_inspected(st.pick_cluster)
            st.history.blacklist[st.pick_cluster] = math.inf
        support = self._support_cluster(st.pick_target)
        if support is not None:
            self.map.mark_inspected(support)
        self._goto(FIND_OBJECT)
        return None

    def _issue_pick(self, target: Cell) -> Action:
        st = self.state
        st.pick_target = target
        st.pick_issued = True
        st.pick_attempts += 1
        return pick(target)

    def _support_cluster(self, cell: Cell | None) -> int | None:
        if cell is None:
            return None
        cl = self.map.cluster_at(self.goal.start_cls, cell)
        return cl.id if cl else None

    def _FindEndReceptacle(self, pose: Pose) -> Action | None:
        if build_goal_map(self.map, "end_receptacle", self.goal.end_cls, self._blacklist()):
            self._goto(NAV_TO_END)
            return None
        return self._explore(pose)

    def _NavigateToEndReceptacle(self, pose: Pose) -> Action | None:
        st, cfg = self.state, self.config
        gm = build_goal_map(self.map, "end_receptacle", self.goal.end_cls, self._blacklist())
        action, arrived, choice = self._pursue(pose, gm, self._select_mode(), cfg.center_alignment)
        if choice is None:
            return self._explore(pose)
        st.goal_source = "end_receptacle"
        if arrived:
            st.place_cluster = choice[1]
            st.place_cell = None
            st.approach_step_count = 0
            st.open_loop_moves = None
            st.place_issued = False
            self._goto(PLACE_OBJECT)
            return None
        return action

    # ---- placing --------------------------------------------------------
    def _placement_cell(self, pose: Pose, cells) -> Cell:
        cells = sorted(cells, key=lambda c: (c[1], c[0]))
        if not cells:
            return pose.cell

        def dist(c):
            return math.hypot(c[0] - pose.x, c[1] - pose.y)

        if self.config.edge_safe_placement:
            depth = _depth(set(cells), ~self.map.explored)
            need = min(self.config.edge_margin, max(depth.values()))
            safe = [c for c in cells if depth[c] >= need]
            return min(safe, key=dist)
        return min(cells, key=dist)

    def _PlaceObject(self, pose: Pose) -> Action | None:
        st, cfg = self.state, self.config
        if st.place_issued:
            st.done = True
            return STOP
        # the edge-safe choice is refreshed as more of the surface comes into view
        if st.place_cell is None or cfg.edge_safe_placement:
            cl = self.map.clusters.get(st.place_cluster)
            cells = cl.cells if cl else [st.chosen_goal or pose.cell]
            st.place_cell = self._placement_cell(pose, cells)
        target = st.place_cell
        if cfg.surface_fallback and not any(d.cls == self.goal.end_cls for d in self.detections):
            surfaces = [d for d in self.detections if taxonomy.is_receptacle_class(d.cls)]
            if surfaces:
                near = min(
                    surfaces,
                    key=lambda d: min(math.hypot(c[0] - pose.x, c[1] - pose.y) for c in d.cells),
                )
                cells = set(near.cells)
                # widen a partial view to the mapped cluster it belongs to
                for c in near.cells:
                    for cls in self.map.classes:
                        cl = self.map.cluster_at(cls, c)
                        if cl is not None and not taxonomy.is_object_class(cls):
                            cells.update(cl.cells)
                target = self._placement_cell(pose, cells)
        st.chosen_goal = target

        bearing = math.degrees(math.atan2(target[1] - pose.y, target[0] - pose.x))
        err = angle_diff(bearing, pose.heading)
        d = math.hypot(target[0] - pose.x, target[1] - pose.y)
        if cfg.incremental_approach:
            if target != pose.cell and abs(err) > 30:
                return TURN_LEFT if err > 0 else TURN_RIGHT
            dx, dy = heading_step(pose.heading)
            ahead = (pose.x + dx, pose.y + dy)
            closer = math.hypot(target[0] - ahead[0], target[1] - ahead[1]) < d
            if (
                d > cfg.place_standoff
                and st.approach_step_count < cfg.max_approach_steps
                and closer
                and not self.map.obstacle[ahead[1], ahead[0]]
            ):
                st.approach_step_count += 1
                return MOVE_FORWARD
        else:
            # open loop: face the target once, then drive a precomputed number of
            # steps from a centroid-based range estimate
            if st.open_loop_moves is None:
                if target != pose.cell and abs(err) > 30:
                    return TURN_LEFT if err > 0 else TURN_RIGHT
                cl = self.map.clusters.get(st.place_cluster)
                cx, cy = cl.centroid if cl else target
                est = math.hypot(cx - pose.x, cy - pose.y)
                st.open_loop_moves = max(0, math.ceil(est - cfg.place_standoff - 1e-9))
            if st.open_loop_moves > 0:
                st.open_loop_moves -= 1
                return MOVE_FORWARD
        st.place_issued = True
        return place(target, drop=cfg.drop_from_height and self.large)


def _depth(cells: set[Cell], unknown=None) -> dict[Cell, int]:
    """Chebyshev depth of each cell inside ``cells``.

    ``unknown`` (a boolean grid) marks cells not yet seen; they may still
    belong to the surface, so they do not end a cell's depth. The depth is
    capped by the grid size to stay finite.
    """
    out = {}
    if unknown is None:
        inside = cells.__contains__
        cap = len(cells)
    else:
        h, w = unknown.shape
        cap = max(h, w)

        def inside(c):
            if c in cells:
                return True
            return 0 <= c[0] < w and 0 <= c[1] < h and bool(unknown[c[1], c[0]])

    for x, y in cells:
        d = 1
        while d <= cap and all(
            inside((x + i, y + j)) for i in range(-d, d + 1) for j in range(-d, d + 1)
        ):
            d += 1
        out[(x, y)] = d
    return out
