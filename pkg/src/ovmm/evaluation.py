"""Episode runner, challenge-style metrics and seeded suites."""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field

from .agent import HeuristicAgent
from .config import AgentConfig, NoiseConfig, RunConfig, SceneConfig
from .errors import InvalidAction
from .perception import simulate_detections
from .rng import substream
from .world import NO_EVENT, RobotState, Scene, generate_scene, observe, step

STAGES = ("found_object", "picked", "found_end_receptacle", "placed_correctly")


@dataclass
class EpisodeResult:
    seed: int
    overall_success: bool = False
    stages: dict[str, bool] = field(default_factory=lambda: {s: False for s in STAGES})
    stage_steps: dict[str, int] = field(default_factory=dict)
    steps: int = 0
    # Stop | Budget | Error
    termination: str = "Budget"
    final_phase: str = ""
    events: dict[str, int] = field(default_factory=dict)
    trace: list[dict] | None = None

    @property
    def partial_success(self) -> float:
        return sum(self.stages.values()) / len(STAGES)


def placed_on_end(scene: Scene) -> bool:
    """Independent check of final world state: goal object resting on an end receptacle."""
    obj = scene.goal_object
    return obj.state == "on_receptacle" and obj.cell in scene.end_cells()


def _update_stages(res: EpisodeResult, scene: Scene, robot: RobotState, obs, t: int) -> None:
    st = res.stages

    def mark(name):
        if not st[name]:
            st[name] = True
            res.stage_steps[name] = t

    obj = scene.goal_object
    near = lambda c: (c[0] - robot.pose.x) ** 2 + (c[1] - robot.pose.y) ** 2 <= scene.reach ** 2
    if not st["found_object"] and obj.cell is not None and near(obj.cell):
        if any(o.id == obj.id for o in obs.objects):
            mark("found_object")
    if st["found_object"] and robot.held == obj.id:
        mark("picked")
    if st["picked"] and robot.held == obj.id and not st["found_end_receptacle"]:
        ends = scene.end_cells()
        if any(near(c) and c in ends for c in zip(obs.xs.tolist(), obs.ys.tolist())):
            mark("found_end_receptacle")
    if st["found_end_receptacle"] and placed_on_end(scene):
        mark("placed_correctly")


CLUSTER_SOURCES = ("inspection", "object", "end_receptacle")


def _floor_goal(agent, scene: Scene) -> bool:
    """Whether the agent is steering toward a cluster that lies on bare floor."""
    st = getattr(agent, "state", None)
    smap = getattr(agent, "map", None)
    if st is None or smap is None or getattr(st, "goal_source", None) not in CLUSTER_SOURCES:
        return False
    cl = smap.clusters.get(st.chosen_cluster)
    return cl is not None and any(scene.is_free(c) for c in cl.cells)


def run_episode(
    seed: int,
    scene_config: SceneConfig | None = None,
    agent_config: AgentConfig | None = None,
    noise: NoiseConfig | None = None,
    budget: int = 1250,
    scene: Scene | None = None,
    trace: bool = False,
    agent_factory=None,
    observer=None,
) -> EpisodeResult:
    """Run observe -> act -> step until Stop, error or ``budget`` actions.

    ``observer(t, agent, robot)``, when given, is called after the agent has
    chosen its action for step ``t`` and before the world applies it.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    scene_config = scene_config or SceneConfig()
    agent_config = agent_config or AgentConfig()
    noise = noise or NoiseConfig()
    if scene is None:
        scene = generate_scene(seed, scene_config)
    robot = RobotState(scene.start_pose)
    if agent_factory is None:
        agent = HeuristicAgent(scene.goal, agent_config, scene.width, scene.height)
    else:
        agent = agent_factory(scene)
    prng = substream(seed, "perception")
    res = EpisodeResult(seed, trace=[] if trace else None)
    last = NO_EVENT
    placed = False
    for t in range(budget):
        obs = observe(scene, robot, last)
        raw = simulate_detections(obs, scene.receptacles, noise, prng)
        _update_stages(res, scene, robot, obs, t)
        action = agent.act(obs, raw)
        if observer is not None:
            observer(t, agent, robot)
        st = getattr(agent, "state", None)
        phase = getattr(st, "phase", "")
        rec = None
        if trace:
            goal = getattr(st, "chosen_goal", None)
            rec = {
                "step": t,
                "phase": phase,
                "via": list(getattr(st, "passed", ())),
                "x": robot.pose.x,
                "y": robot.pose.y,
                "heading": robot.pose.heading,
                "held": robot.held,
                "action": str(action),
                "goal": list(goal) if goal else None,
                "cluster": getattr(st, "chosen_cluster", None),
                "source": getattr(st, "goal_source", None),
                "stg": list(st.last_short_term_goal) if getattr(st, "last_short_term_goal", None) else None,
                "explored": int(agent.map.explored.sum()) if hasattr(agent, "map") else 0,
                "goal_floor": _floor_goal(agent, scene),
                "placed_before": placed,
            }
        try:
            robot, ev, scene = step(scene, robot, action)
        except InvalidAction as exc:
            res.steps = t + 1
            res.termination = "Error"
            res.final_phase = phase
            if rec is not None:
                rec["event"] = f"invalid_action({exc})"
                res.trace.append(rec)
            break
        res.steps = t + 1
        res.events[ev.kind] = res.events.get(ev.kind, 0) + 1
        placed = placed or action.kind == "place"
        if rec is not None:
            rec["event"] = str(ev)
            res.trace.append(rec)
        last = ev
        res.final_phase = phase
        if action.kind == "stop":
            res.termination = "Stop"
            break
    if res.stages["found_end_receptacle"] and placed_on_end(scene):
        res.stages["placed_correctly"] = True
        res.stage_steps.setdefault("placed_correctly", res.steps)
    res.overall_success = placed_on_end(scene) and all(res.stages.values())
    res.events.pop("none", None)
    return res


def phase_sequence(trace: list[dict]) -> list[str]:
    """Every phase the agent occupied, in order, including ones it passed
    through and left within a single step."""
    out: list[str] = []
    for r in trace:
        for p in [*r.get("via", ()), r["phase"]]:
            if not out or out[-1] != p:
                out.append(p)
    return out


def trace_to_jsonl(trace: list[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in trace)


# ---- suites --------------------------------------------------------------

@dataclass
class VariantStats:
    name: str
    episodes: int
    overall: float  # percent
    partial: float  # percent
    steps: float
    results: list[EpisodeResult] = field(default_factory=list, repr=False)


@dataclass
class SuiteReport:
    variants: list[VariantStats]
    fingerprint: str
    seeds: tuple[int, int]

    def row(self, name: str) -> VariantStats:
        return next(v for v in self.variants if v.name == name)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(f"# config {self.fingerprint}\n")
        out.write("# partial success = 4 equal stages: found_object, picked, found_end_receptacle, placed_correctly\n")
        out.write("agent,episodes,overall_success_pct,partial_success_pct,mean_steps\n")
        for v in self.variants:
            out.write(f"{v.name},{v.episodes},{v.overall:.2f},{v.partial:.2f},{v.steps:.2f}\n")
        return out.getvalue()

    def to_table(self) -> str:
        head = ("Agent name", "Overall Success", "Partial Success", "Number of Steps")
        rows = [
            (v.name, f"{v.overall:.1f}%", f"{v.partial:.1f}%", f"{v.steps:.2f}")
            for v in self.variants
        ]
        widths = [max(len(r[i]) for r in rows + [head]) for i in range(4)]
        lines = [
            f"config {self.fingerprint}  seeds {self.seeds[0]}..{self.seeds[1]}",
            "  ".join(h.ljust(w) for h, w in zip(head, widths)),
            "  ".join("-" * w for w in widths),
        ]
        lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
        return "\n".join(lines) + "\n"

    def episodes_csv(self) -> str:
        out = io.StringIO()
        out.write("agent,seed,overall,partial,steps,termination," + ",".join(STAGES) + "\n")
        for v in self.variants:
            for r in v.results:
                flags = ",".join(str(int(r.stages[s])) for s in STAGES)
                out.write(
                    f"{v.name},{r.seed},{int(r.overall_success)},{r.partial_success:.2f},"
                    f"{r.steps},{r.termination},{flags}\n"
                )
        return out.getvalue()


def aggregate(name: str, results: list[EpisodeResult]) -> VariantStats:
    n = len(results)
    if n == 0:
        return VariantStats(name, 0, 0.0, 0.0, 0.0, [])
    return VariantStats(
        name,
        n,
        100.0 * sum(r.overall_success for r in results) / n,
        100.0 * sum(r.partial_success for r in results) / n,
        sum(r.steps for r in results) / n,
        results,
    )


def _run_one(args):
    seed, scene_cfg, agent_cfg, noise, budget, trace = args
    return run_episode(seed, scene_cfg, agent_cfg, noise, budget, trace=trace)


def run_suite(
    seeds,
    variants: dict[str, AgentConfig],
    run: RunConfig | None = None,
    trace: bool = False,
    workers: int = 1,
) -> SuiteReport:
    """Run every (seed, variant) pair; results are kept in seed order."""
    run = run or RunConfig()
    seeds = list(seeds)
    if len(set(variants)) != len(variants):
        raise ValueError("variant names must be distinct")
    stats = []
    for name, cfg in variants.items():
        jobs = [(s, run.scene, cfg, run.noise, run.budget, trace) for s in seeds]
        if workers > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(workers) as pool:
                results = list(pool.map(_run_one, jobs))
        else:
            results = [_run_one(j) for j in jobs]
        stats.append(aggregate(name, results))
    return SuiteReport(stats, suite_fingerprint(variants, run), seed_span(seeds))


def suite_fingerprint(variants: dict[str, AgentConfig], run: RunConfig) -> str:
    """Hash of every variant's canonical config text, in variant order."""
    text = "".join(
        f"[{n}]\n" + RunConfig(run.scene, run.noise, c, run.budget).canonical_text()
        for n, c in variants.items()
    )
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def seed_span(seeds) -> tuple[int, int]:
    seeds = list(seeds)
    return (min(seeds), max(seeds)) if seeds else (0, -1)
