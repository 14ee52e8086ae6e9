import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bfs_reachable, visible_oracle
from ovmm.config import SceneConfig
from ovmm.errors import ConfigError, InvalidAction
from ovmm.suites import SceneBuilder
from ovmm.world import (
    DIRS,
    FREE,
    MOVE_FORWARD,
    STOP,
    TURN_LEFT,
    WALL,
    EpisodeGoal,
    Pose,
    RobotState,
    Scene,
    generate_scene,
    heading_octant,
    observe,
    pick,
    place,
    step,
    traversal,
)


def small_scene():
    b = SceneBuilder(12, 12)
    t = b.receptacle("table", 5, 5, 4, 3)
    b.receptacle("chair", 2, 9)
    b.obj("cup", t, (6, 6), goal=True)
    return b.build(Pose(3, 6, 0), EpisodeGoal("cup", "table", "chair"))


class TestHeadings:
    def test_octants(self):
        assert [heading_octant(h) for h in (0, 30, 60, 90, 180, 270, 330)] == [0, 1, 1, 2, 4, 6, 7]

    def test_ties_go_counterclockwise(self):
        # 22.5 degrees sits exactly between octants 0 and 1
        assert heading_octant(22.5) == 1
        assert heading_octant(67.5) == 2

    def test_pose_rejects_unquantised_heading(self):
        with pytest.raises(ValueError):
            Pose(1, 1, 45)


class TestGenerate:
    def test_same_seed_same_scene(self):
        a, b = generate_scene(7), generate_scene(7)
        assert a.to_text() == b.to_text()
        assert np.array_equal(a.cells, b.cells)

    def test_different_seeds_differ(self):
        assert generate_scene(1).to_text() != generate_scene(2).to_text()

    def test_minimal_room(self):
        cfg = SceneConfig(
            width=16, height=16, rooms_min=1, rooms_max=1,
            receptacles_per_room_min=0, receptacles_per_room_max=0,
            goal="cup,chair,table", receptacle_classes=("chair", "table"),
            object_classes=("cup",), distractors=0,
        )
        s = generate_scene(3, cfg)
        assert sorted(r.cls for r in s.receptacles) == ["chair", "table"]
        cup = s.goal_object
        assert cup.cls == "cup" and s.receptacle(cup.support).cls == "chair"
        reach = bfs_reachable(s.cells, s.start_pose.cell)
        chair = s.receptacle(cup.support)
        assert any((x + dx, y + dy) in reach for x, y in chair.cells for dx, dy in DIRS)

    @pytest.mark.parametrize("seed", range(100))
    def test_solvable_by_independent_bfs(self, seed):
        s = generate_scene(seed)
        reach = bfs_reachable(s.cells, s.start_pose.cell)

        def touches(rid):
            return any(
                (x + dx, y + dy) in reach for x, y in s.receptacle(rid).cells for dx, dy in DIRS
            )

        obj = s.goal_object
        assert s.receptacle(obj.support).cls == s.goal.start_cls
        assert obj.cell in s.receptacle(obj.support).cells
        assert touches(obj.support)
        assert any(touches(r.id) for r in s.receptacles if r.cls == s.goal.end_cls)

    def test_bad_goal_is_config_error(self):
        with pytest.raises(ConfigError):
            generate_scene(0, SceneConfig(goal="cup,chair"))
        with pytest.raises(ConfigError):
            generate_scene(0, SceneConfig(goal="cup,throne,table"))

    def test_text_round_trip(self):
        s = generate_scene(11)
        assert Scene.from_text(s.to_text()) == s


class TestStep:
    def test_move_into_wall_collides(self):
        s = small_scene()
        r = RobotState(Pose(1, 1, 180))
        r2, ev, _ = step(s, r, MOVE_FORWARD)
        assert ev.kind == "collision" and r2 == r

    def test_collision_iff_target_not_free(self):
        s = small_scene()
        for y in range(1, 11):
            for x in range(1, 11):
                if s.cells[y, x] != FREE:
                    continue
                for h in range(0, 360, 30):
                    r = RobotState(Pose(x, y, h))
                    dx, dy = DIRS[heading_octant(h)]
                    _, ev, _ = step(s, r, MOVE_FORWARD)
                    assert (ev.kind == "collision") == (not s.is_free((x + dx, y + dy)))

    def test_turns(self):
        s = small_scene()
        r, _, _ = step(s, RobotState(Pose(3, 6, 330)), TURN_LEFT)
        assert r.pose.heading == 0

    def test_pick_out_of_range(self):
        b = SceneBuilder(14, 5)
        t = b.receptacle("table", 10, 2)
        b.obj("cup", t, (10, 2), goal=True)
        b.receptacle("chair", 12, 1)
        s = b.build(Pose(3, 2, 0), EpisodeGoal("cup", "table", "chair"))
        _, ev, _ = step(s, RobotState(s.start_pose), pick((10, 2)))
        assert (ev.kind, ev.reason) == ("pick_failure", "out_of_range")

    def test_pick_then_place_on_edge_falls(self):
        s = small_scene()
        r, ev, s = step(s, RobotState(Pose(4, 6, 0)), pick((6, 6)))
        assert ev.kind == "pick_success" and r.held == s.goal_object.id
        # (5, 5) is a corner of the 4x3 table: edge depth 1 < safe depth 2
        r2, ev, s2 = step(s, r, place((5, 5)))
        assert ev.kind == "place_fallen"
        assert s2.goal_object.state == "fallen" and r2.held is None

    def test_place_while_empty_is_invalid(self):
        s = small_scene()
        with pytest.raises(InvalidAction):
            step(s, RobotState(Pose(4, 6, 0)), place((6, 6)))

    def test_large_object_needs_drop(self):
        b = SceneBuilder(14, 10)
        t = b.receptacle("table", 6, 3, 4, 4)
        s_id = b.receptacle("sofa", 2, 8)
        b.obj("box", s_id, (2, 8), goal=True)
        s = b.build(Pose(4, 5, 0), EpisodeGoal("box", "sofa", "table"))
        obj = s.goal_object
        held = RobotState(Pose(4, 5, 0), held=obj.id)
        s = s.with_objects((dataclasses.replace(obj, cell=None, state="held", support=None),))
        _, ev, _ = step(s, held, place((7, 5)))
        assert ev.kind == "place_collision"
        _, ev, s2 = step(s, held, place((7, 5), drop=True))
        assert ev.kind == "place_success" and s2.goal_object.support == t

    def test_goal_object_conserved(self):
        s = small_scene()
        r = RobotState(Pose(4, 6, 0))
        for a in (pick((6, 6)), TURN_LEFT, place((7, 6)), STOP):
            r, _, s = step(s, r, a)
            goals = [o for o in s.objects if o.goal]
            assert len(goals) == 1
            assert goals[0].state in ("held", "on_receptacle", "on_floor", "fallen")


class TestObserve:
    def test_wall_one_ahead(self):
        b = SceneBuilder(9, 9)
        b.wall(5, 1, 5, 7)
        b.receptacle("table", 2, 7)
        b.receptacle("chair", 3, 7)
        b.obj("cup", 1, (2, 7), goal=True)
        s = b.build(Pose(4, 4, 0), EpisodeGoal("cup", "table", "chair"))
        vis = observe(s, RobotState(s.start_pose)).cell_set()
        assert (5, 4) in vis
        assert not any(x > 5 for x, _ in vis)
        assert vis == visible_oracle(s.cells, 4, 4, 0)

    def test_empty_room_matches_cone_oracle(self):
        b = SceneBuilder(9, 9)
        b.receptacle("table", 1, 1)
        b.receptacle("chair", 7, 1)
        b.obj("cup", 1, (1, 1), goal=True)
        s = b.build(Pose(4, 4, 90), EpisodeGoal("cup", "table", "chair"))
        for h in range(0, 360, 30):
            vis = observe(s, RobotState(Pose(4, 4, h))).cell_set()
            assert vis == visible_oracle(s.cells, 4, 4, h)

    def test_cell_behind_never_visible(self):
        s = small_scene()
        for h in range(0, 360, 30):
            dx, dy = DIRS[heading_octant(h)]
            vis = observe(s, RobotState(Pose(3, 6, h))).cell_set()
            assert (3 - dx, 6 - dy) not in vis

    @pytest.mark.parametrize("seed", range(0, 40, 4))
    def test_generated_scenes_match_oracle(self, seed):
        s = generate_scene(seed)
        rng = np.random.default_rng(seed)
        ys, xs = np.nonzero(s.cells == FREE)
        for _ in range(3):
            k = int(rng.integers(len(xs)))
            h = int(rng.integers(12)) * 30
            vis = observe(s, RobotState(Pose(int(xs[k]), int(ys[k]), h))).cell_set()
            assert vis == visible_oracle(s.cells, int(xs[k]), int(ys[k]), h)

    def test_observation_deterministic(self):
        s = generate_scene(5)
        a = observe(s, RobotState(s.start_pose))
        b = observe(s, RobotState(s.start_pose))
        assert np.array_equal(a.xs, b.xs) and np.array_equal(a.height, b.height)


@settings(max_examples=200, deadline=None)
@given(st.integers(-12, 12), st.integers(-12, 12))
def test_traversal_is_a_connected_walk(dx, dy):
    cells = traversal(dx, dy)
    assert (0, 0) not in cells and (dx, dy) not in cells
    path = [(0, 0), *cells, (dx, dy)] if (dx, dy) != (0, 0) else [(0, 0)]
    for (ax, ay), (bx, by) in zip(path, path[1:]):
        assert max(abs(ax - bx), abs(ay - by)) == 1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 11))
def test_random_walls_visibility_oracle(seed, h):
    rng = np.random.default_rng(seed)
    cells = np.where(rng.random((11, 11)) < 0.25, WALL, FREE).astype(np.int16)
    cells[5, 5] = FREE
    cells[0, :] = cells[-1, :] = WALL
    cells[:, 0] = cells[:, -1] = WALL
    # a 2-cell receptacle somewhere so the same-instance rule is exercised
    cells[2, 7:9] = 1
    from ovmm.world import ObjectInstance, ReceptacleInstance

    s = Scene(
        cells,
        (ReceptacleInstance(1, "table", ((7, 2), (8, 2)), 0.75),),
        (ObjectInstance(1, "cup", (7, 2), "small", "on_receptacle", 1, True),),
        Pose(5, 5, h * 30),
        EpisodeGoal("cup", "table", "chair"),
    )
    vis = observe(s, RobotState(s.start_pose)).cell_set()
    assert vis == visible_oracle(cells, 5, 5, h * 30)
