import numpy as np
import pytest

from ovmm.config import AgentConfig, NoiseConfig, RunConfig
from ovmm.evaluation import (
    STAGES,
    EpisodeResult,
    aggregate,
    phase_sequence,
    placed_on_end,
    run_episode,
    run_suite,
)
from ovmm.suites import GOLDEN_NOISE, golden_scene
from ovmm.world import MOVE_FORWARD, STOP, TURN_LEFT


class Scripted:
    """Plays a fixed action list, then stops."""

    def __init__(self, actions):
        self.actions = list(actions)

    def act(self, obs, raw):
        return self.actions.pop(0) if self.actions else STOP


def test_immediate_stop():
    res = run_episode(0, agent_factory=lambda s: Scripted([]))
    assert (res.steps, res.termination, res.partial_success, res.overall_success) == (1, "Stop", 0.0, False)


def test_budget_termination():
    res = run_episode(0, budget=5, agent_factory=lambda s: Scripted([TURN_LEFT] * 10))
    assert res.steps == 5 and res.termination == "Budget"
    assert res.events == {}


def test_collisions_are_counted():
    res = run_episode(0, scene=golden_scene(), noise=GOLDEN_NOISE,
                      agent_factory=lambda s: Scripted([MOVE_FORWARD] * 4))
    # (3,2) heading 180: cells (2,2), (1,2) are free, (0,2) is the border wall
    assert res.events == {"collision": 2}


def test_bad_budget():
    with pytest.raises(ValueError):
        run_episode(0, budget=0)


def test_partial_success_is_stage_fraction():
    r = EpisodeResult(0)
    r.stages.update(found_object=True, picked=True)
    assert r.partial_success == 0.5


def test_aggregate_exact():
    results = []
    for seed in range(10):
        r = EpisodeResult(seed, steps=10 * seed + 1)
        for s in STAGES[: seed % 5]:
            r.stages[s] = True
        r.overall_success = seed % 5 == 4
        results.append(r)
    v = aggregate("x", results)
    assert v.episodes == 10
    assert v.overall == pytest.approx(20.0)
    # stage counts 0,1,2,3,4 twice over: mean 2/4
    assert v.partial == pytest.approx(50.0)
    assert v.steps == pytest.approx(46.0)
    assert aggregate("empty", []).episodes == 0


@pytest.fixture(scope="module")
def small_suite():
    run = RunConfig()
    variants = {"baseline": AgentConfig.baseline(), "uniteam": AgentConfig.uniteam()}
    return run_suite(range(8), variants, run)


def test_suite_stage_invariants(small_suite):
    for v in small_suite.variants:
        for r in v.results:
            flags = [r.stages[s] for s in STAGES]
            # stages are cumulative: a later stage implies every earlier one
            assert flags == sorted(flags, reverse=True)
            assert 1 <= r.steps <= RunConfig().budget
            steps = [r.stage_steps[s] for s in STAGES if r.stages[s]]
            assert steps == sorted(steps)
            assert r.overall_success == r.stages["placed_correctly"]


def test_suite_determinism(small_suite):
    again = run_suite(range(8), {"baseline": AgentConfig.baseline(), "uniteam": AgentConfig.uniteam()})
    assert again.to_csv() == small_suite.to_csv()
    assert again.episodes_csv() == small_suite.episodes_csv()


def test_report_formats(small_suite):
    csv = small_suite.to_csv().splitlines()
    assert csv[0].startswith("# config ") and csv[2].startswith("agent,")
    assert [line.split(",")[0] for line in csv[3:]] == ["baseline", "uniteam"]
    table = small_suite.to_table()
    assert "Overall Success" in table and "seeds 0..7" in table
    assert len(small_suite.episodes_csv().splitlines()) == 1 + 16


def test_golden_success_matches_world_state():
    seen = {}
    res = run_episode(0, scene=golden_scene(), agent_config=AgentConfig.uniteam(),
                      noise=GOLDEN_NOISE, trace=True,
                      observer=lambda t, agent, robot: seen.setdefault("agent", agent))
    assert res.overall_success and res.termination == "Stop"
    assert "agent" in seen
    assert res.partial_success == 1.0
    seq = phase_sequence(res.trace)
    assert seq[0] == "FindObject" and seq[-1] == "PlaceObject"
    explored = [r["explored"] for r in res.trace]
    assert explored == sorted(explored)


def test_placed_on_end_reads_world_only():
    s = golden_scene()
    assert not placed_on_end(s)


def test_noise_changes_outcome_stream():
    a = run_episode(3, trace=True, noise=NoiseConfig())
    b = run_episode(3, trace=True, noise=NoiseConfig.noiseless())
    assert np.any([x["action"] != y["action"] for x, y in zip(a.trace, b.trace)]) or a.steps != b.steps
