"""Deterministic discrete-event kernel plus the network/compute timing model.

Events dequeue in (time, seq) order; ``seq`` is a global counter so equal
times never fall back to float comparison.  Processed events form the
trace, serialisable as one JSON object per line.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

from gridsim.errors import InvalidScheduleError, NoRouteError
from gridsim.model import GridTopology, NodeSpec

MESSAGE = "message-delivery"
TRANSFER = "transfer-complete"
COMPUTE = "compute-complete"
NODE_FAIL = "node-fail"
NODE_RECOVER = "node-recover"
CHECKPOINT = "checkpoint-due"
TIMER = "timer"
EVENT_KINDS = (MESSAGE, TRANSFER, COMPUTE, NODE_FAIL, NODE_RECOVER, CHECKPOINT, TIMER)


@dataclass(eq=False)
class Event:
    time: float
    kind: str
    payload: dict = field(default_factory=dict)
    handler: Callable[["Event"], Any] | None = None
    seq: int = -1
    cancelled: bool = False


class Kernel:
    def __init__(self, record_trace: bool = True):
        self.now = 0.0
        self.record_trace = record_trace
        self.trace: list[tuple[float, int, str, dict]] = []
        self.processed = 0
        self._queue: list[tuple[float, int, Event]] = []
        self._seq = itertools.count()

    def schedule(self, event: Event) -> Event:
        if event.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {event.kind!r}")
        if not event.time >= self.now:
            raise InvalidScheduleError(f"event at t={event.time} is before the clock t={self.now}")
        event.seq = next(self._seq)
        heapq.heappush(self._queue, (event.time, event.seq, event))
        return event

    def at(self, time: float, kind: str, payload: dict | None = None, handler=None) -> Event:
        return self.schedule(Event(time, kind, payload or {}, handler))

    def after(self, delay: float, kind: str, payload: dict | None = None, handler=None) -> Event:
        return self.at(self.now + delay, kind, payload, handler)

    @staticmethod
    def cancel(event: Event | None) -> None:
        if event is not None:
            event.cancelled = True

    def pending(self) -> int:
        return sum(1 for *_, e in self._queue if not e.cancelled)

    def step(self) -> Event | None:
        while self._queue:
            time, seq, event = heapq.heappop(self._queue)
            if event.cancelled:
                continue
            self.now = time
            self.processed += 1
            if self.record_trace:
                self.trace.append((time, seq, event.kind, event.payload))
            if event.handler is not None:
                event.handler(event)
            return event
        return None

    def run_until(self, t_end: float = math.inf) -> list:
        while self._queue:
            time, _, event = self._queue[0]
            if event.cancelled:
                heapq.heappop(self._queue)
                continue
            if time > t_end:
                break
            self.step()
        if math.isfinite(t_end) and t_end > self.now:
            self.now = t_end
        return self.trace

    def run(self) -> list:
        return self.run_until(math.inf)


def trace_lines(trace: Iterable[tuple[float, int, str, dict]]) -> Iterable[str]:
    for time, seq, kind, payload in trace:
        yield json.dumps(
            {"time": time, "seq": seq, "kind": kind, "payload": payload},
            sort_keys=True,
            separators=(",", ":"),
        )


def dump_trace(trace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in trace_lines(trace):
            fh.write(line)
            fh.write("\n")


def load_trace(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# -- failures ----------------------------------------------------------------

@dataclass(frozen=True)
class FailureEntry:
    node_id: int
    fail_time: float
    recover_time: float | None = None


@dataclass(frozen=True)
class FailureSchedule:
    entries: tuple[FailureEntry, ...] = ()

    def violations(self, node_ids: Iterable[int] | None = None) -> list[str]:
        out = []
        known = set(node_ids) if node_ids is not None else None
        by_node: dict[int, list[FailureEntry]] = {}
        for e in self.entries:
            if known is not None and e.node_id not in known:
                out.append(f"FailureSchedule: unknown node {e.node_id}")
            if e.fail_time < 0:
                out.append(f"FailureSchedule: node {e.node_id} fail_time < 0")
            if e.recover_time is not None and not e.fail_time < e.recover_time:
                out.append(f"FailureSchedule: node {e.node_id} recover_time must exceed fail_time")
            by_node.setdefault(e.node_id, []).append(e)
        for node, entries in by_node.items():
            entries.sort(key=lambda e: e.fail_time)
            for a, b in zip(entries, entries[1:]):
                end = math.inf if a.recover_time is None else a.recover_time
                if b.fail_time < end:
                    out.append(f"FailureSchedule: overlapping failure intervals for node {node}")
        return out

    def validate(self, node_ids=None) -> None:
        problems = self.violations(node_ids)
        if problems:
            raise InvalidScheduleError("; ".join(problems))

    def down_intervals(self, node_id: int) -> list[tuple[float, float]]:
        return [
            (e.fail_time, math.inf if e.recover_time is None else e.recover_time)
            for e in self.entries
            if e.node_id == node_id
        ]


# -- per-job outcome ----------------------------------------------------------

CSV_COLUMNS = (
    "job_id", "policy", "class", "seed", "submit_t", "start_t", "end_t", "node_id",
    "origin_subgrid", "exec_subgrid", "checkpoints", "exports", "redone_flop",
    "msgs_intra", "msgs_region", "msgs_inter",
)


@dataclass
class JobRecord:
    job_id: int
    policy: str
    job_class: str
    submit_time: float
    origin_subgrid: int
    start_time: float | None = None
    end_time: float | None = None
    node_id: int | None = None
    exec_subgrid: int | None = None
    checkpoints_taken: int = 0
    exports_taken: int = 0
    redone_flop: int = 0
    executed_flop: int = 0
    bytes_moved: int = 0
    messages_intra: int = 0
    messages_region: int = 0
    messages_inter_region: int = 0
    restarts_from_zero: int = 0
    status: str = "pending"

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    @property
    def completion_time(self) -> float | None:
        if self.end_time is None:
            return None
        return self.end_time - self.submit_time

    def csv_row(self, seed: int) -> list:
        return [
            self.job_id, self.policy, self.job_class, seed, _num(self.submit_time),
            _num(self.start_time), _num(self.end_time),
            "" if self.node_id is None else self.node_id,
            self.origin_subgrid, "" if self.exec_subgrid is None else self.exec_subgrid,
            self.checkpoints_taken, self.exports_taken, self.redone_flop,
            self.messages_intra, self.messages_region, self.messages_inter_region,
        ]


def _num(v):
    return "" if v is None else repr(float(v))


# -- timing model ------------------------------------------------------------

def transfer_time(nbytes: float, path: Sequence[int] | None, topology: GridTopology) -> float:
    """Sum of hop latencies plus the payload at the path's bottleneck rate."""
    if nbytes < 0:
        raise ValueError("nbytes must be >= 0")
    if not path:
        raise NoRouteError("no path")
    latency = 0.0
    bottleneck = math.inf
    for a, b in zip(path, path[1:]):
        link = topology.link(a, b)
        if link is None:
            raise NoRouteError(f"no link between {a} and {b}")
        latency += link.latency
        bottleneck = min(bottleneck, link.bandwidth)
    if nbytes == 0 or math.isinf(bottleneck):
        return latency
    return latency + nbytes * 8.0 / bottleneck


def compute_time(flop: float, node: NodeSpec, concurrent_jobs: int = 0) -> float:
    if flop == 0:
        return 0.0
    return flop / (node.capability * node.owner_share / (1 + concurrent_jobs))


@dataclass(frozen=True)
class Route:
    latency: float
    bandwidth: float  # bottleneck, bit/s; inf for the empty path
    pred: int | None

    @property
    def rtt(self) -> float:
        return 2.0 * self.latency


class Router:
    """Static shortest-latency routing, ties broken by the lexicographically
    smaller node-id path.  Per-source tables are computed lazily."""

    def __init__(self, topology: GridTopology):
        self.topology = topology
        self._adj = topology.neighbours()
        self._tables: dict[int, dict[int, Route]] = {}

    def table(self, source: int) -> dict[int, Route]:
        tab = self._tables.get(source)
        if tab is None:
            tab = self._tables[source] = self._dijkstra(source)
        return tab

    def _dijkstra(self, source: int) -> dict[int, Route]:
        out: dict[int, Route] = {}
        heap = [(0.0, (source,), math.inf)]
        best = {source: 0.0}
        while heap:
            dist, path, bw = heapq.heappop(heap)
            u = path[-1]
            if u in out:
                continue
            out[u] = Route(dist, bw, path[-2] if len(path) > 1 else None)
            for v, link in self._adj[u]:
                if v in out:
                    continue
                nd = dist + link.latency
                if nd <= best.get(v, math.inf):
                    best[v] = nd
                    heapq.heappush(heap, (nd, path + (v,), min(bw, link.bandwidth)))
        return out

    def route(self, src: int, dst: int) -> Route:
        r = self.table(src).get(dst)
        if r is None:
            raise NoRouteError(f"{dst} unreachable from {src}")
        return r

    def path(self, src: int, dst: int) -> list[int]:
        tab = self.table(src)
        if dst not in tab:
            raise NoRouteError(f"{dst} unreachable from {src}")
        out = [dst]
        while out[-1] != src:
            out.append(tab[out[-1]].pred)
        return out[::-1]

    def latency(self, src: int, dst: int) -> float:
        if src == dst:
            return 0.0
        return self.route(src, dst).latency

    def transfer_time(self, nbytes: float, src: int, dst: int) -> float:
        if src == dst:
            return 0.0
        r = self.route(src, dst)
        if nbytes == 0:
            return r.latency
        return r.latency + nbytes * 8.0 / r.bandwidth
