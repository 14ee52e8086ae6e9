"""Command line entry point: ``ovmm run``, ``ovmm replay`` and ``ovmm compare``.

``run`` writes into ``--out``:

* ``report.csv`` and ``report.txt``: per-agent aggregates with the config
  fingerprint in the header,
* ``episodes.csv``: one row per (agent, seed),
* ``traces/<agent>_<seed>.jsonl`` with ``--trace``: a header line holding the
  seed and the full config text, then one record per step,
* ``maps/<agent>_<seed>.txt`` and ``maps/<agent>_<seed>_<channel>.pgm`` with
  ``--dump-maps``: the agent's final map.

Exit status is 0 on success, 2 on a configuration error and 1 when a replay
does not reproduce its trace.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from pathlib import Path

from .config import FLAGS, AgentConfig, RunConfig, load_config, parse_config_text
from .errors import ConfigError, OvmmError
from .evaluation import (
    SuiteReport,
    aggregate,
    run_episode,
    seed_span,
    suite_fingerprint,
    trace_to_jsonl,
)
from .render import MapSnapshot, render, snapshot_of

AGENTS = ("baseline", "uniteam", "custom")


def parse_seeds(text: str) -> list[int]:
    """``"A..B"`` (inclusive), ``"A"`` or a comma list of either."""
    seeds: list[int] = []
    for part in text.split(","):
        m = re.fullmatch(r"\s*(\d+)\s*(?:\.\.\s*(\d+)\s*)?", part)
        if not m:
            raise ConfigError(f"bad seed range {text!r}; expected A..B")
        lo = int(m.group(1))
        hi = int(m.group(2)) if m.group(2) is not None else lo
        if hi < lo:
            raise ConfigError(f"empty seed range {part.strip()!r}")
        seeds.extend(range(lo, hi + 1))
    return seeds


def parse_ablations(items: list[str]) -> dict[str, bool]:
    out: dict[str, bool] = {}
    for item in items:
        name, sep, value = item.partition("=")
        name, value = name.strip(), value.strip().lower()
        if not sep or value not in ("on", "off"):
            raise ConfigError(f"bad --ablate {item!r}; expected FLAG=on or FLAG=off")
        if name not in FLAGS:
            raise ConfigError(f"unknown ablation flag {name!r}")
        out[name] = value == "on"
    return out


def build_variants(run: RunConfig, agents: list[str], ablate: dict[str, bool]) -> dict[str, AgentConfig]:
    base = {
        "baseline": AgentConfig.baseline,
        "uniteam": AgentConfig.uniteam,
        "custom": lambda: run.agent,
    }
    variants = {}
    for name in agents:
        cfg = base[name]()
        # keep the file's numeric parameters for the named presets too
        if name != "custom":
            flags = {f: getattr(cfg, f) for f in FLAGS}
            cfg = run.agent.with_flags(**flags)
        variants[name] = cfg.with_flags(**ablate) if ablate else cfg
    return variants


def _trace_header(seed: int, agent: str, run: RunConfig) -> dict:
    return {"type": "header", "seed": seed, "agent": agent, "config": run.canonical_text()}


def cmd_run(args: argparse.Namespace) -> int:
    run = load_config(args.scene_config) if args.scene_config else RunConfig()
    if args.budget is not None:
        if args.budget < 1:
            raise ConfigError("--budget must be >= 1")
        run = RunConfig(run.scene, run.noise, run.agent, args.budget)
    seeds = parse_seeds(args.seeds)
    agents = args.agent or ["baseline", "uniteam"]
    if len(set(agents)) != len(agents):
        raise ConfigError("each --agent may be given once")
    variants = build_variants(run, agents, parse_ablations(args.ablate))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.trace:
        (out / "traces").mkdir(exist_ok=True)
    if args.dump_maps:
        (out / "maps").mkdir(exist_ok=True)

    stats = []
    for name, cfg in variants.items():
        results = []
        for seed in seeds:
            holder = {}
            res = run_episode(
                seed,
                run.scene,
                cfg,
                run.noise,
                run.budget,
                trace=args.trace,
                observer=(lambda t, a, r: holder.__setitem__("agent", a)) if args.dump_maps else None,
            )
            if args.trace:
                header = _trace_header(seed, name, RunConfig(run.scene, run.noise, cfg, run.budget))
                (out / "traces" / f"{name}_{seed}.jsonl").write_text(
                    json.dumps(header, sort_keys=True) + "\n" + trace_to_jsonl(res.trace)
                )
                res.trace = None
            if args.dump_maps and "agent" in holder:
                snap = snapshot_of(holder["agent"])
                (out / "maps" / f"{name}_{seed}.txt").write_bytes(render(snap, "ascii"))
                for channel, data in render(snap, "pgm").items():
                    (out / "maps" / f"{name}_{seed}_{channel}.pgm").write_bytes(data)
            results.append(res)
        stats.append(aggregate(name, results))

    report = SuiteReport(stats, suite_fingerprint(variants, run), seed_span(seeds))
    (out / "report.csv").write_text(report.to_csv())
    (out / "report.txt").write_text(report.to_table())
    (out / "episodes.csv").write_text(report.episodes_csv())
    sys.stdout.write(report.to_table())
    return 0


def _read_trace(path: Path) -> tuple[dict, list[dict]]:
    lines = path.read_text().splitlines()
    if not lines:
        raise ConfigError(f"{path}: empty trace")
    header = json.loads(lines[0])
    if header.get("type") != "header":
        raise ConfigError(f"{path}: first line is not a trace header")
    return header, [json.loads(line) for line in lines[1:]]


def cmd_replay(args: argparse.Namespace) -> int:
    header, records = _read_trace(Path(args.trace))
    run = parse_config_text(header["config"])
    holder = {}
    res = run_episode(
        header["seed"],
        run.scene,
        run.agent,
        run.noise,
        run.budget,
        trace=True,
        observer=lambda t, a, r: holder.__setitem__("agent", a),
    )
    if trace_to_jsonl(res.trace) != trace_to_jsonl(records):
        sys.stderr.write("replay diverged from the recorded trace\n")
        return 1
    snap = snapshot_of(holder["agent"])
    path = tuple(dict.fromkeys((r["x"], r["y"]) for r in records))
    snap = MapSnapshot(snap.smap, snap.pose, snap.goal_map, path)
    data = render(snap, args.render)
    if isinstance(data, dict):
        out = Path(args.out or ".")
        out.mkdir(parents=True, exist_ok=True)
        for channel, blob in data.items():
            (out / f"{channel}.pgm").write_bytes(blob)
    else:
        sys.stdout.write(data.decode("ascii"))
    sys.stdout.write(
        f"seed {header['seed']} agent {header['agent']} steps {res.steps} "
        f"termination {res.termination} overall {int(res.overall_success)} "
        f"partial {res.partial_success:.2f}\n"
    )
    return 0


def read_report(path: str | Path) -> tuple[str, dict[str, dict[str, float]]]:
    """Fingerprint and per-agent rows of a ``report.csv``."""
    text = Path(path).read_text()
    fingerprint = ""
    body = []
    for line in text.splitlines():
        if line.startswith("# config "):
            fingerprint = line.split()[2]
        elif not line.startswith("#"):
            body.append(line)
    rows = {}
    for row in csv.DictReader(body):
        rows[row["agent"]] = {
            "episodes": float(row["episodes"]),
            "overall": float(row["overall_success_pct"]),
            "partial": float(row["partial_success_pct"]),
            "steps": float(row["mean_steps"]),
        }
    return fingerprint, rows


def compare_text(a: str | Path, b: str | Path) -> str:
    fa, ra = read_report(a)
    fb, rb = read_report(b)
    lines = [f"R1 {a} config {fa}", f"R2 {b} config {fb}"]
    head = ("agent", "metric", "R1", "R2", "R2-R1")
    rows = []
    for agent in sorted(set(ra) | set(rb)):
        for metric in ("overall", "partial", "steps"):
            va = ra.get(agent, {}).get(metric)
            vb = rb.get(agent, {}).get(metric)
            fmt = lambda v: "-" if v is None else f"{v:.2f}"
            delta = "-" if va is None or vb is None else f"{vb - va:+.2f}"
            rows.append((agent, metric, fmt(va), fmt(vb), delta))
    widths = [max(len(r[i]) for r in rows + [head]) for i in range(len(head))]
    lines.append("  ".join(h.ljust(w) for h, w in zip(head, widths)))
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join(lines) + "\n"


def cmd_compare(args: argparse.Namespace) -> int:
    sys.stdout.write(compare_text(*args.reports))
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ovmm", description="Grid-world open-vocabulary mobile manipulation")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a seeded suite and write reports")
    r.add_argument("--seeds", default="0..199", help="inclusive range A..B (default 0..199)")
    r.add_argument("--scene-config", help="flat key = value config file")
    r.add_argument("--agent", action="append", choices=AGENTS, help="repeatable; default baseline and uniteam")
    r.add_argument("--ablate", action="append", default=[], metavar="FLAG=on/off")
    r.add_argument("--budget", type=int)
    r.add_argument("--out", default="ovmm_out")
    r.add_argument("--dump-maps", action="store_true")
    r.add_argument("--trace", action="store_true")
    r.set_defaults(func=cmd_run)

    rp = sub.add_parser("replay", help="re-run a traced episode and render its final map")
    rp.add_argument("--trace", required=True)
    rp.add_argument("--render", default="ascii")
    rp.add_argument("--out", help="directory for pgm channels")
    rp.set_defaults(func=cmd_replay)

    c = sub.add_parser("compare", help="side-by-side deltas of two report.csv files")
    c.add_argument("--reports", nargs=2, required=True, metavar=("R1", "R2"))
    c.set_defaults(func=cmd_compare)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except (OSError, ValueError, KeyError, OvmmError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
