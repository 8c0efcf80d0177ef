"""Experiment configs, seeded batch runs, CSV/JSON outputs and policy
comparison."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import re
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from gridsim.broker import POLICIES
from gridsim.errors import IncomparableInputError, InvalidSpecError
from gridsim.model import (
    JOB_CLASSES,
    STREAM_FAILURES,
    PlatformSpec,
    generate_platform,
    generate_workload,
    rng_for,
)
from gridsim.resilience.checkpoint import CheckpointPolicy
from gridsim.resilience.erasure import ErasureParams
from gridsim.simkernel import CSV_COLUMNS, FailureEntry, FailureSchedule, trace_lines
from gridsim.simulation import GridSimulation, Join, SimSettings

SUMMARY_FIELDS = (
    "policy", "workload_class", "seed", "node_count", "mean_completion", "median_completion",
    "p95_completion", "jobs_completed", "jobs_failed", "msgs_intra", "msgs_region",
    "msgs_inter", "redone_flop",
)


@dataclass(frozen=True)
class FailureGenerator:
    count: int = 10
    window: tuple[float, float] = (10.0, 500.0)
    downtime: tuple[float, float] | None = (50.0, 200.0)

    def violations(self) -> list[str]:
        out = []
        if self.count < 0:
            out.append("failure generator: count must be >= 0")
        lo, hi = self.window
        if not 0 <= lo <= hi:
            out.append("failure generator: window must satisfy 0 <= lo <= hi")
        if self.downtime is not None:
            dlo, dhi = self.downtime
            if not 0 < dlo <= dhi:
                out.append("failure generator: downtime must satisfy 0 < lo <= hi")
        return out

    def generate(self, node_ids, seed: int) -> FailureSchedule:
        """``count`` failures on distinct nodes (fewer if the platform is smaller)."""
        rng = rng_for(seed, STREAM_FAILURES)
        ids = sorted(node_ids)
        count = min(self.count, len(ids))
        chosen = [ids[int(i)] for i in rng.choice(len(ids), size=count, replace=False)]
        times = rng.uniform(self.window[0], self.window[1], count)
        entries = []
        for node, t in zip(chosen, times):
            rec = None
            if self.downtime is not None:
                rec = float(t + rng.uniform(self.downtime[0], self.downtime[1]))
            entries.append(FailureEntry(node, float(t), rec))
        entries.sort(key=lambda e: (e.fail_time, e.node_id))
        return FailureSchedule(tuple(entries))


@dataclass(frozen=True)
class WorkloadSpec:
    job_class: str = "hybrid"
    count: int = 1000
    submit_policy: Any = "all-at-t0"


@dataclass(frozen=True)
class ExperimentConfig:
    platform: PlatformSpec
    workload: WorkloadSpec
    policies: tuple[str, ...]
    seeds: tuple[int, ...]
    output_path: str = "out"
    failure_schedule: FailureSchedule | None = None
    failure_generator: FailureGenerator | None = None
    failure_seed: int | None = None
    erasure: ErasureParams = ErasureParams()
    checkpoint: CheckpointPolicy | None = None
    settings: SimSettings = SimSettings()
    joins: tuple[Join, ...] = ()
    node_counts: tuple[int, ...] = ()
    write_traces: bool = False

    def with_overrides(self, *, policies=None, seeds=None, jobs=None, nodes=None, output_path=None):
        cfg = self
        if policies:
            cfg = dataclasses.replace(cfg, policies=tuple(policies))
        if seeds:
            cfg = dataclasses.replace(cfg, seeds=tuple(seeds))
        if jobs:
            cfg = dataclasses.replace(cfg, workload=dataclasses.replace(cfg.workload, count=jobs))
        if nodes:
            cfg = dataclasses.replace(cfg, platform=dataclasses.replace(cfg.platform, node_count=nodes),
                                      node_counts=())
        if output_path:
            cfg = dataclasses.replace(cfg, output_path=output_path)
        problems = config_violations(cfg)
        if problems:
            raise InvalidSpecError(problems)
        return cfg


# Nodes may be named by role, resolved once the platform exists:
# "superpeer:<sid>" is that sub-grid's initial super-peer, "spare:<sid>" its
# highest-id member that is not the super-peer.
_ROLE = re.compile(r"(superpeer|spare):(\d+)")


def resolve_node(ref, topology) -> int:
    if isinstance(ref, int):
        return ref
    m = _ROLE.fullmatch(ref)
    if m is None:
        raise InvalidSpecError([f"bad node reference {ref!r}"])
    role, sid = m.group(1), int(m.group(2))
    sg = next((g for g in topology.subgrids if g.subgrid_id == sid), None)
    if sg is None:
        raise InvalidSpecError([f"node reference {ref!r}: no sub-grid {sid}"])
    if role == "superpeer":
        return sg.super_peer
    spares = [n for n in sg.members if n != sg.super_peer]
    if not spares:
        raise InvalidSpecError([f"node reference {ref!r}: sub-grid {sid} has no spare"])
    return max(spares)


# -- validation ----------------------------------------------------------------

class ConfigParseError(InvalidSpecError):
    pass


def _build(cls, raw, name: str, problems: list[str]):
    if raw is None:
        return None
    if not isinstance(raw, dict):
        problems.append(f"{name}: expected an object")
        return None
    known = {f.name for f in dataclasses.fields(cls) if not f.name.startswith("_")}
    unknown = sorted(set(raw) - known)
    if unknown:
        problems.append(f"{name}: unknown field(s) {unknown}")
    kwargs = {}
    for k, v in raw.items():
        if k in known:
            kwargs[k] = tuple(v) if isinstance(v, list) else v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        problems.append(f"{name}: {exc}")
        return None


def config_violations(cfg: ExperimentConfig) -> list[str]:
    out = list(cfg.platform.violations())
    w = cfg.workload
    if w.job_class not in JOB_CLASSES:
        out.append(f"workload.class must be one of {JOB_CLASSES}, got {w.job_class!r}")
    if not isinstance(w.count, int) or w.count < 1:
        out.append(f"workload.count must be >= 1, got {w.count!r}")
    sp = w.submit_policy
    if not (sp == "all-at-t0" or (isinstance(sp, dict) and set(sp) == {"poisson"} and sp["poisson"] > 0)):
        out.append(f"workload.submit_policy must be 'all-at-t0' or {{'poisson': rate>0}}, got {sp!r}")
    if not cfg.policies:
        out.append("policies: at least one policy required")
    for p in cfg.policies:
        if p not in POLICIES:
            out.append(f"policies: unknown policy {p!r}")
    if len(set(cfg.policies)) != len(cfg.policies):
        out.append("policies: duplicates")
    if not cfg.seeds:
        out.append("seeds: at least one seed required")
    for s in cfg.seeds:
        if not isinstance(s, int) or not 0 <= s < 2**64:
            out.append(f"seeds: {s!r} is not a 64-bit unsigned integer")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        out.append("seeds: duplicates")
    out += cfg.erasure.violations()
    if cfg.checkpoint is not None:
        out += cfg.checkpoint.violations()
    out += cfg.settings.violations()
    if cfg.failure_schedule is not None and cfg.failure_generator is not None:
        out.append("failure_schedule: give either entries or generate, not both")
    if cfg.failure_schedule is not None:
        for e in cfg.failure_schedule.entries:
            if isinstance(e.node_id, str) and not _ROLE.fullmatch(e.node_id):
                out.append(f"failure_schedule: bad node reference {e.node_id!r}")
        concrete = FailureSchedule(tuple(e for e in cfg.failure_schedule.entries if isinstance(e.node_id, int)))
        ids = range(cfg.platform.node_count) if isinstance(cfg.platform.node_count, int) else None
        out += concrete.violations(ids)
    if cfg.failure_generator is not None:
        out += cfg.failure_generator.violations()
    for j in cfg.joins:
        if isinstance(j.node_id, str):
            if not _ROLE.fullmatch(j.node_id):
                out.append(f"joins: bad node reference {j.node_id!r}")
        elif isinstance(cfg.platform.node_count, int) and not 0 <= j.node_id < cfg.platform.node_count:
            out.append(f"joins: unknown node {j.node_id}")
        if j.time < 0:
            out.append("joins: time must be >= 0")
    for n in cfg.node_counts:
        if not isinstance(n, int) or n < 1:
            out.append(f"node_counts: {n!r} must be a positive integer")
    return out


def validate_config(raw) -> tuple[ExperimentConfig | None, list[str]]:
    """Parse and check a config given as JSON text or an already-loaded dict.

    Returns ``(config, [])`` or ``(None, violations)``; every violation is
    reported, not just the first.  Malformed JSON raises ``ConfigParseError``
    naming the line and column.
    """
    if isinstance(raw, (str, bytes)):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigParseError([f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"])
    problems: list[str] = []
    if not isinstance(raw, dict):
        return None, ["config: top level must be an object"]
    known = {"platform", "workload", "policies", "seeds", "output_path", "failure_schedule",
             "failure_seed", "erasure", "checkpoint", "settings", "joins", "node_counts", "write_traces"}
    unknown = sorted(set(raw) - known)
    if unknown:
        problems.append(f"config: unknown field(s) {unknown}")
    for required in ("platform", "workload", "policies", "seeds"):
        if required not in raw:
            problems.append(f"config: missing required field {required!r}")

    platform = _build(PlatformSpec, raw.get("platform", {}), "platform", problems)
    wraw = raw.get("workload", {})
    workload = None
    if isinstance(wraw, dict):
        extra = sorted(set(wraw) - {"class", "count", "submit_policy"})
        if extra:
            problems.append(f"workload: unknown field(s) {extra}")
        workload = WorkloadSpec(wraw.get("class", "hybrid"), wraw.get("count", 1000),
                                wraw.get("submit_policy", "all-at-t0"))
    else:
        problems.append("workload: expected an object")

    fs_raw = raw.get("failure_schedule")
    schedule = generator = None
    if fs_raw is not None:
        if not isinstance(fs_raw, dict):
            problems.append("failure_schedule: expected an object")
        else:
            if "entries" in fs_raw:
                try:
                    schedule = FailureSchedule(tuple(
                        FailureEntry(e["node_id"] if isinstance(e["node_id"], str) else int(e["node_id"]),
                                     float(e["fail_time"]),
                                     None if e.get("recover_time") is None else float(e["recover_time"]))
                        for e in fs_raw["entries"]
                    ))
                except (KeyError, TypeError, ValueError) as exc:
                    problems.append(f"failure_schedule.entries: malformed entry ({exc})")
            if "generate" in fs_raw:
                generator = _build(FailureGenerator, fs_raw["generate"], "failure_schedule.generate", problems)
            extra = sorted(set(fs_raw) - {"entries", "generate"})
            if extra:
                problems.append(f"failure_schedule: unknown field(s) {extra}")

    erasure = _build(ErasureParams, raw.get("erasure", {}), "erasure", problems) or ErasureParams()
    checkpoint = _build(CheckpointPolicy, raw.get("checkpoint"), "checkpoint", problems)
    settings = _build(SimSettings, raw.get("settings", {}), "settings", problems) or SimSettings()
    joins = []
    for j in raw.get("joins", []) or []:
        try:
            nid = j["node_id"] if isinstance(j["node_id"], str) else int(j["node_id"])
            joins.append(Join(nid, float(j["time"])))
        except (KeyError, TypeError, ValueError):
            problems.append(f"joins: malformed entry {j!r}")

    policies = raw.get("policies", [])
    seeds = raw.get("seeds", [])
    if not isinstance(policies, list):
        problems.append("policies: expected a list")
        policies = []
    if not isinstance(seeds, list):
        problems.append("seeds: expected a list")
        seeds = []
    if platform is None or workload is None:
        return None, problems

    cfg = ExperimentConfig(
        platform=platform,
        workload=workload,
        policies=tuple(policies),
        seeds=tuple(seeds),
        output_path=raw.get("output_path", "out"),
        failure_schedule=schedule,
        failure_generator=generator,
        failure_seed=raw.get("failure_seed"),
        erasure=erasure,
        checkpoint=checkpoint,
        settings=settings,
        joins=tuple(joins),
        node_counts=tuple(raw.get("node_counts", ()) or ()),
        write_traces=bool(raw.get("write_traces", False)),
    )
    problems += config_violations(cfg)
    if problems:
        return None, problems
    return cfg, []


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    cfg, problems = validate_config(text)
    if problems:
        raise InvalidSpecError(problems)
    return cfg


# -- running --------------------------------------------------------------------

@dataclass
class RunResult:
    policy: str
    seed: int
    node_count: int
    rows: list[list]
    trace_text: str | None = None
    counters: dict = field(default_factory=dict)
    wall_seconds: float = 0.0


def build_run(cfg: ExperimentConfig, policy: str, seed: int, node_count: int | None = None,
              record_trace: bool | None = None) -> GridSimulation:
    spec = dataclasses.replace(cfg.platform, rng_seed=seed)
    if node_count is not None:
        spec = dataclasses.replace(spec, node_count=node_count)
    topo = generate_platform(spec)
    w = cfg.workload
    jobs = generate_workload(w.job_class, w.count, topo.node_ids, w.submit_policy, seed)
    if cfg.failure_schedule is not None:
        failures = FailureSchedule(tuple(
            dataclasses.replace(e, node_id=resolve_node(e.node_id, topo)) for e in cfg.failure_schedule.entries
        ))
        failures.validate(topo.node_ids)
    elif cfg.failure_generator is not None:
        fseed = seed if cfg.failure_seed is None else cfg.failure_seed
        failures = cfg.failure_generator.generate(topo.node_ids, fseed)
    else:
        failures = FailureSchedule()
    return GridSimulation(
        topo, jobs, policy, seed=seed, failures=failures, checkpoint=cfg.checkpoint,
        erasure=cfg.erasure, settings=cfg.settings,
        joins=tuple(Join(resolve_node(j.node_id, topo), j.time) for j in cfg.joins),
        record_trace=cfg.write_traces if record_trace is None else record_trace,
    )


def execute_run(cfg: ExperimentConfig, policy: str, seed: int, node_count: int) -> RunResult:
    started = time.perf_counter()
    sim = build_run(cfg, policy, seed, node_count)
    records = sim.run()
    rows = [r.csv_row(seed) for r in records]
    text = "\n".join(trace_lines(sim.trace)) + "\n" if cfg.write_traces else None
    return RunResult(policy, seed, node_count, rows, text, dict(sim.counters),
                     time.perf_counter() - started)


def _execute(args):
    return execute_run(*args)


def _csv_text(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    writer.writerows(rows)
    return buf.getvalue()


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def summarize_rows(rows: list[dict], node_count: int | None = None) -> list[dict]:
    """SummaryRows from CSV rows (dicts keyed by CSV_COLUMNS, string values)."""
    groups: dict[tuple, list[dict]] = defaultdict(list)
    for r in rows:
        groups[(r["policy"], r["class"], int(r["seed"]))].append(r)
    out = []
    for (policy, cls, seed) in sorted(groups):
        group = groups[(policy, cls, seed)]
        times = [float(r["end_t"]) - float(r["submit_t"]) for r in group if r["end_t"] != ""]
        arr = np.array(times, dtype=float)
        out.append({
            "policy": policy,
            "workload_class": cls,
            "seed": seed,
            "node_count": node_count,
            "mean_completion": float(arr.mean()) if len(arr) else None,
            "median_completion": float(np.median(arr)) if len(arr) else None,
            "p95_completion": float(np.percentile(arr, 95)) if len(arr) else None,
            "jobs_completed": len(times),
            "jobs_failed": len(group) - len(times),
            "msgs_intra": sum(int(r["msgs_intra"]) for r in group),
            "msgs_region": sum(int(r["msgs_region"]) for r in group),
            "msgs_inter": sum(int(r["msgs_inter"]) for r in group),
            "redone_flop": sum(int(r["redone_flop"]) for r in group),
        })
    return out


def _rows_as_dicts(rows: list[list]) -> list[dict]:
    text = _csv_text(rows)
    return list(csv.DictReader(io.StringIO(text)))


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> dict:
    """Run every (node_count x policy x seed) combination and write
    ``jobs.csv``, ``summary.json`` and optional trace logs under
    ``cfg.output_path`` (one sub-directory per node count when sweeping)."""
    out_dir = Path(cfg.output_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    probe = out_dir / ".write-test"
    probe.write_text("")  # fail on unwritable output before simulating
    probe.unlink()

    sweep = cfg.node_counts or (cfg.platform.node_count,)
    tasks = [(cfg, p, s, n) for n in sweep for p in cfg.policies for s in cfg.seeds]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_execute, tasks))
    else:
        results = [execute_run(*t) for t in tasks]

    summary = []
    paths = {}
    for n in sweep:
        target = out_dir / f"n{n}" if cfg.node_counts else out_dir
        target.mkdir(parents=True, exist_ok=True)
        mine = [r for r in results if r.node_count == n]
        mine.sort(key=lambda r: (r.policy, r.seed))
        rows = [row for r in mine for row in r.rows]
        rows.sort(key=lambda row: (row[1], row[3], row[0]))
        csv_text = _csv_text(rows)
        (target / "jobs.csv").write_text(csv_text, encoding="utf-8")
        part = summarize_rows(list(csv.DictReader(io.StringIO(csv_text))), n)
        (target / "summary.json").write_text(json.dumps(part, indent=2, sort_keys=True) + "\n",
                                             encoding="utf-8")
        summary += part
        paths[n] = target
        if cfg.write_traces:
            tdir = target / "traces"
            tdir.mkdir(exist_ok=True)
            for r in mine:
                (tdir / f"trace_{r.policy}_{r.seed}.jsonl").write_text(r.trace_text, encoding="utf-8")
    if cfg.node_counts:
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                              encoding="utf-8")
    timings = [{"policy": r.policy, "seed": r.seed, "node_count": r.node_count, "wall_seconds": r.wall_seconds}
               for r in results]
    return {"summary": summary, "dirs": {n: str(p) for n, p in paths.items()}, "timings": timings}


# -- comparison -----------------------------------------------------------------

def compare_policies(summary: list[dict]) -> dict:
    """Seed-by-seed win counts per workload class plus plot-ready series.

    A seed where the lowest mean completion time is shared counts as a tie.
    """
    by_class: dict[str, list[dict]] = defaultdict(list)
    for row in summary:
        by_class[row["workload_class"]].append(row)
    report = {"classes": {}, "plot_rows": []}
    for cls in sorted(by_class):
        rows = by_class[cls]
        policies = sorted({r["policy"] for r in rows})
        if len(policies) < 2:
            raise IncomparableInputError(f"{cls}: need at least two policies, got {policies}")
        keys: dict[str, set] = defaultdict(set)
        table: dict[tuple, dict[str, float]] = defaultdict(dict)
        for r in rows:
            key = (r.get("node_count"), r["seed"])
            keys[r["policy"]].add(key)
            table[key][r["policy"]] = r["mean_completion"]
        ref = keys[policies[0]]
        for p in policies[1:]:
            if keys[p] != ref:
                raise IncomparableInputError(f"{cls}: policy {p} ran on a different seed set")
        wins = {p: 0 for p in policies}
        ties = 0
        per_seed = []
        for key in sorted(ref, key=lambda k: (k[0] or 0, k[1])):
            means = table[key]
            finite = {p: m for p, m in means.items() if m is not None and math.isfinite(m)}
            best = min(finite.values()) if finite else None
            leaders = sorted(p for p, m in finite.items() if m == best)
            winner = leaders[0] if len(leaders) == 1 else None
            if winner is None:
                ties += 1
            else:
                wins[winner] += 1
            per_seed.append({"node_count": key[0], "seed": key[1], "winner": winner, "means": means})
        report["classes"][cls] = {"seeds": len(ref), "wins": wins, "ties": ties, "per_seed": per_seed}

        sweep_nodes = len({k[0] for k in ref}) > 1
        for entry in per_seed:
            for p in policies:
                report["plot_rows"].append({
                    "workload_class": cls,
                    "x": entry["node_count"] if sweep_nodes else entry["seed"],
                    "x_kind": "node_count" if sweep_nodes else "seed",
                    "policy": p,
                    "mean_completion": entry["means"][p],
                })
    return report


def plot_csv(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("workload_class", "x_kind", "x", "policy", "mean_completion"))
    for r in report["plot_rows"]:
        writer.writerow((r["workload_class"], r["x_kind"], r["x"], r["policy"], repr(r["mean_completion"])))
    return buf.getvalue()


def win_matrix_text(report: dict) -> str:
    lines = []
    for cls, info in report["classes"].items():
        lines.append(f"{cls} ({info['seeds']} seeds, {info['ties']} ties)")
        for p, w in sorted(info["wins"].items()):
            lines.append(f"  {p:6s} {w}/{info['seeds']}")
    return "\n".join(lines)
