"""The grid simulation: brokering, discovery, failures, self-healing and
checkpoint/restart running on top of the event kernel.

One broker per sub-grid handles job requests one at a time: discovery
query to the super-peer, poll of the matching members, policy selection,
dispatch.  Placed jobs stage their input from the origin node and then
compute under processor sharing.  Progress is counted in whole FLOPs so
``executed == flop_demand + redone`` holds exactly.

The run starts from a converged overlay: every node is registered and
every registry mirrored at t=0.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence


from gridsim.broker import (
    NCDA,
    POLICIES,
    ROUND_ROBIN,
    Bid,
    PolicyState,
    ResourceDescription,
    needs_bandwidth_probe,
    select,
)
from gridsim.discovery import (
    TIER_INTER,
    TIER_REGION,
    TIER_SUBGRID,
    Overlay,
    Registry,
    SuperPeerUnavailable,
)
from gridsim.errors import GridSimError, InvalidSpecError
from gridsim.model import GridTopology, Job, QueryConstraint, rng_for
from gridsim.resilience.checkpoint import (
    CheckpointPolicy,
    FailureHistory,
    IntervalSeries,
    seed_intervals,
)
from gridsim.resilience.election import elect_regionpeer, elect_superpeer
from gridsim.resilience.erasure import (
    ErasureParams,
    decode_bytes,
    encode_bytes,
    majority_version,
)
from gridsim.simkernel import (
    CHECKPOINT,
    COMPUTE,
    MESSAGE,
    NODE_FAIL,
    NODE_RECOVER,
    TIMER,
    TRANSFER,
    FailureSchedule,
    JobRecord,
    Kernel,
    Router,
)

log = logging.getLogger(__name__)

STREAM_PROBE = 4


@dataclass(frozen=True)
class SimSettings:
    heartbeat_period: float = 1.0
    missed_heartbeats: int = 3
    poll_timeout: float = 5.0
    probe_bytes: int = 16384
    probe_noise: float = 0.0
    rediscover_timeout: float = 1.0
    rediscover_retries: int = 3
    max_broker_retries: int = 3
    horizon: float = math.inf

    def violations(self) -> list[str]:
        out = []
        if not self.heartbeat_period > 0:
            out.append("SimSettings: heartbeat_period must be > 0")
        if self.missed_heartbeats < 1:
            out.append("SimSettings: missed_heartbeats must be >= 1")
        if not self.poll_timeout > 0:
            out.append("SimSettings: poll_timeout must be > 0")
        if self.probe_bytes < 0:
            out.append("SimSettings: probe_bytes must be >= 0")
        if not 0 <= self.probe_noise < 1:
            out.append("SimSettings: probe_noise must be in [0, 1)")
        if not self.rediscover_timeout > 0 or self.rediscover_retries < 0:
            out.append("SimSettings: rediscovery timeout/retries invalid")
        return out

    def detection_time(self, fail_time: float) -> float:
        """Last heartbeat before the failure plus ``missed`` periods."""
        p = self.heartbeat_period
        return math.floor(fail_time / p) * p + self.missed_heartbeats * p


@dataclass(frozen=True)
class Join:
    """A node that stays offline until ``time`` and then joins via multicast."""

    node_id: int
    time: float


class _JobRun:
    __slots__ = (
        "job", "rec", "phase", "node", "progress", "restore", "ckpts_here",
        "series", "ckpt_event", "transfer_event", "exports", "retries", "demand",
    )

    def __init__(self, job: Job, rec: JobRecord):
        self.job = job
        self.rec = rec
        self.demand = int(job.flop_demand)
        self.phase = "new"
        self.node = None
        self.progress = 0
        self.restore = 0
        self.ckpts_here = 0
        self.series = None
        self.ckpt_event = None
        self.transfer_event = None
        self.exports = []
        self.retries = 0


class _Broker:
    def __init__(self, subgrid_id: int):
        self.subgrid_id = subgrid_id
        self.queue: deque = deque()
        self.busy = False
        self.waiting = False
        self.rr = PolicyState(ROUND_ROBIN)


class _Decision:
    def __init__(self, ident, run, candidates, t0):
        self.ident = ident
        self.run = run
        self.outstanding = set(candidates)
        self.bids: list[Bid] = []
        self.timeout = None
        self.closed = False
        self.t0 = t0


def _tier_field(tier: str) -> str:
    return {
        TIER_SUBGRID: "messages_intra",
        TIER_REGION: "messages_region",
        TIER_INTER: "messages_inter_region",
    }[tier]


class GridSimulation:
    def __init__(
        self,
        topology: GridTopology,
        jobs: Sequence[Job],
        policy: str = NCDA,
        *,
        seed: int = 0,
        failures: FailureSchedule | None = None,
        checkpoint: CheckpointPolicy | None = None,
        erasure: ErasureParams | None = ErasureParams(),
        settings: SimSettings | None = None,
        joins: Iterable[Join] = (),
        record_trace: bool = True,
    ):
        if policy not in POLICIES:
            raise InvalidSpecError([f"unknown policy {policy!r}"])
        if not topology.subgrids or not topology.regions:
            raise InvalidSpecError(["topology needs sub-grid and region partitions"])
        self.topology = topology
        self.policy = policy
        self.seed = seed
        self.settings = settings or SimSettings()
        problems = self.settings.violations()
        self.failures = failures or FailureSchedule()
        problems += self.failures.violations(topology.node_ids)
        self.checkpoint = checkpoint
        if checkpoint is not None:
            problems += checkpoint.violations()
        self.erasure = erasure
        if erasure is not None:
            problems += erasure.violations()
        if problems:
            raise InvalidSpecError(problems)

        self.kernel = Kernel(record_trace=record_trace)
        self.router = Router(topology)
        self.nodes = {n.node_id: n for n in topology.nodes}
        self.alive = {n: True for n in self.nodes}
        self.overlay = Overlay(topology, alive=lambda n: self.alive[n])
        self.brokers = {sid: _Broker(sid) for sid in self.overlay.members}
        self.assigned: dict[int, set[int]] = {n: set() for n in self.nodes}
        self.computing: dict[int, dict[int, _JobRun]] = {n: {} for n in self.nodes}
        self.last_update = {n: 0.0 for n in self.nodes}
        self.next_completion: dict[int, object] = {n: None for n in self.nodes}
        self.history = {
            n: FailureHistory(prior_mtbf=checkpoint.prior_mtbf if checkpoint else 1e4,
                              alpha=checkpoint.history_weight if checkpoint else 0.5)
            for n in self.nodes
        }
        self.cached_sp: dict[int, int | None] = {}
        self.shares: dict[int, object] = {}
        self.last_mirror: dict[int, tuple[int, bytes]] = {}
        self.regenerations: list[dict] = []
        self.elections: list[dict] = []
        self.pending_rediscover: dict[int, list[int]] = {sid: [] for sid in self.overlay.members}
        self.electing: set[int] = set()
        self.region_electing: set[int] = set()
        self.epoch = 0
        self.probe_rng = rng_for(seed, STREAM_PROBE)
        self.counters = {"probe_bytes": 0, "export_bytes": 0, "input_bytes": 0}
        self._decision_ids = 0

        offline = {j.node_id: j.time for j in joins}
        for node in offline:
            self.alive[node] = False
        self.offline_until = offline

        self.runs: dict[int, _JobRun] = {}
        for job in sorted(jobs, key=lambda j: j.job_id):
            rec = JobRecord(job.job_id, policy, job.job_class, job.submit_time,
                            self.overlay.subgrid_of[job.origin_node])
            self.runs[job.job_id] = _JobRun(job, rec)

        # converged start: registrations and mirrors are in place at t=0
        self.overlay.bootstrap(self._describe, push=True)
        self.overlay.drain()
        for n, sid in self.overlay.subgrid_of.items():
            self.cached_sp[n] = self.overlay.super_peer[sid] if self.alive[n] else None
        for sid in sorted(self.overlay.members):
            self._mirror(sid, announce=False)

        for run in self.runs.values():
            self.kernel.at(run.job.submit_time, TIMER, {"timer": "submit", "job": run.job.job_id},
                           self._on_submit)
        for e in sorted(self.failures.entries, key=lambda e: (e.fail_time, e.node_id)):
            self.kernel.at(e.fail_time, NODE_FAIL, {"node": e.node_id}, self._on_fail)
            if e.recover_time is not None:
                self.kernel.at(e.recover_time, NODE_RECOVER, {"node": e.node_id}, self._on_recover)
        for node, t in sorted(offline.items()):
            self.kernel.at(t, NODE_RECOVER, {"node": node, "join": True}, self._on_recover)

    # ------------------------------------------------------------------ api
    def run(self) -> list[JobRecord]:
        self.kernel.run_until(self.settings.horizon)
        for run in self.runs.values():
            if run.rec.status not in ("completed", "failed"):
                run.rec.status = "incomplete"
        return self.records

    @property
    def records(self) -> list[JobRecord]:
        return [self.runs[j].rec for j in sorted(self.runs)]

    @property
    def trace(self):
        return self.kernel.trace

    # --------------------------------------------------------------- helpers
    def _describe(self, node: int) -> ResourceDescription:
        spec = self.nodes[node]
        return ResourceDescription(node, spec.capability, spec.owner_share,
                                   len(self.assigned[node]), spec.storage, self.kernel.now)

    def _lat(self, a: int, b: int) -> float:
        return self.router.latency(a, b)

    def _message(self, t: float, kind: str, src: int, dst, tier: str, handler=None, **extra):
        payload = {"msg": kind, "src": src, "dst": dst, "tier": tier}
        payload.update(extra)
        return self.kernel.at(t, MESSAGE, payload, handler)

    def _replay(self, messages, t0: float, run: _JobRun | None = None) -> float:
        """Schedule protocol messages back to back; returns arrival of the last."""
        t = t0
        for m in messages:
            t += self._lat(m.src, m.dst)
            self._message(t, m.kind, m.src, m.dst, m.tier, query_id=m.query_id)
            if run is not None:
                field_name = _tier_field(m.tier)
                setattr(run.rec, field_name, getattr(run.rec, field_name) + 1)
        return t

    def _count(self, run: _JobRun, tier: str, n: int = 1) -> None:
        name = _tier_field(tier)
        setattr(run.rec, name, getattr(run.rec, name) + n)

    # --------------------------------------------------------------- mirror
    def _mirror(self, sid: int, announce: bool = True) -> None:
        """Erasure-code the registry onto the live non-leader members."""
        sp = self.overlay.super_peer[sid]
        if sp is None or self.erasure is None:
            return
        reg = self.overlay.registries[sid]
        blob = reg.serialize()
        holders = [m for m in self.overlay.members[sid] if m != sp and self.alive[m]]
        params = self.erasure.scaled_to(len(holders))
        self.last_mirror[sid] = (reg.version, blob)
        if params is None:
            return
        shares = encode_bytes(blob, params, version=reg.version)
        for holder, share in zip(holders, shares):
            self.shares[holder] = (params, share)
            if announce:
                self._message(self.kernel.now + self._lat(sp, holder), "share", sp, holder,
                              TIER_SUBGRID, version=reg.version, index=share.index)
        if announce and len(shares) > len(holders):
            log.info("sub-grid %s: %d undeliverable shares", sid, len(shares) - len(holders))

    def _registry_changed(self, sid: int) -> None:
        self._mirror(sid)
        self.overlay.push_power(sid)
        self._replay(self.overlay.drain(), self.kernel.now)

    # ---------------------------------------------------------------- jobs
    def _on_submit(self, ev) -> None:
        run = self.runs[ev.payload["job"]]
        run.phase = "queued"
        self._enqueue(run)

    def _enqueue(self, run: _JobRun, front: bool = False) -> None:
        broker = self.brokers[run.rec.origin_subgrid]
        run.phase = "queued"
        if front:
            broker.queue.appendleft(run)
        else:
            broker.queue.append(run)
        self._kick(broker.subgrid_id)

    def _kick(self, sid: int) -> None:
        broker = self.brokers[sid]
        if broker.busy or not broker.queue:
            return
        sp = self.overlay.super_peer[sid]
        if sp is None:
            broker.waiting = True
            return
        run = broker.queue.popleft()
        broker.busy = True
        broker.waiting = False
        run.phase = "deciding"
        job = run.job
        now = self.kernel.now
        requester = job.origin_node
        constraint = QueryConstraint(min_capability=0.0, min_storage=float(job.byte_demand), count=1)
        q = self.overlay.new_query(constraint, requester)
        try:
            result = self.overlay.query_subgrid(sp, q)
        except SuperPeerUnavailable:
            # the query is lost; the broker resumes once a new super-peer exists
            self._message(now + self._lat(requester, sp), "query", requester, sp, TIER_SUBGRID,
                          query_id=q.query_id, dropped=True)
            self._count(run, TIER_SUBGRID)
            self.overlay.drain()
            broker.queue.appendleft(run)
            broker.busy = False
            broker.waiting = True
            return
        t_ready = self._replay(self.overlay.drain(), now, run)
        if not result.found:
            self.kernel.at(t_ready, TIMER, {"timer": "not-found", "job": job.job_id},
                           lambda ev, r=run, s=sid: self._job_not_found(r, s))
            return
        self.kernel.at(t_ready, TIMER, {"timer": "poll", "job": job.job_id},
                       lambda ev, r=run, nodes=result.nodes, s=sid: self._start_poll(r, nodes, s))

    def _job_not_found(self, run: _JobRun, sid: int) -> None:
        run.rec.status = "failed"
        run.phase = "failed"
        self.brokers[sid].busy = False
        self._kick(sid)

    def _start_poll(self, run: _JobRun, candidates, sid: int) -> None:
        now = self.kernel.now
        self._decision_ids += 1
        decision = _Decision(self._decision_ids, run, candidates, now)
        requester = run.job.origin_node
        probe = needs_bandwidth_probe(self.policy) and self.settings.probe_bytes > 0
        for member in sorted(candidates):
            if member == requester:
                t = now
            else:
                route = self.router.route(requester, member)
                t = now + route.latency
                if probe:
                    t += self.settings.probe_bytes * 8.0 / route.bandwidth
                    self.counters["probe_bytes"] += self.settings.probe_bytes
            self._message(t, "poll-request", requester, member, TIER_SUBGRID,
                          lambda ev, d=decision, m=member: self._on_poll_request(d, m),
                          decision=decision.ident)
        self._count(run, TIER_SUBGRID, len(candidates))
        decision.timeout = self.kernel.at(
            now + self.settings.poll_timeout, TIMER,
            {"timer": "poll-timeout", "decision": decision.ident},
            lambda ev, d=decision, s=sid: self._close_poll(d, s),
        )

    def _on_poll_request(self, decision: _Decision, member: int) -> None:
        if not self.alive[member]:
            return
        desc = self._describe(member)
        requester = decision.run.job.origin_node
        if member == requester:
            bw, rtt = math.inf, 0.0
        else:
            route = self.router.route(requester, member)
            bw, rtt = route.bandwidth, route.rtt
            if self.settings.probe_noise:
                bw *= 1.0 + self.settings.probe_noise * float(self.probe_rng.uniform(-1.0, 1.0))
        bid = Bid(desc, bw, rtt)
        t = self.kernel.now + self._lat(member, requester)
        self._message(t, "poll-response", member, requester, TIER_SUBGRID,
                      lambda ev, d=decision, b=bid: self._on_poll_response(d, b),
                      decision=decision.ident)
        self._count(decision.run, TIER_SUBGRID)

    def _on_poll_response(self, decision: _Decision, bid: Bid) -> None:
        if decision.closed:
            return
        decision.bids.append(bid)
        decision.outstanding.discard(bid.node_id)
        if not decision.outstanding:
            self.kernel.cancel(decision.timeout)
            self._close_poll(decision, decision.run.rec.origin_subgrid)

    def _close_poll(self, decision: _Decision, sid: int) -> None:
        if decision.closed:
            return
        decision.closed = True
        run = decision.run
        broker = self.brokers[run.rec.origin_subgrid]
        broker.busy = False
        if not decision.bids:
            run.retries += 1
            if run.retries > self.settings.max_broker_retries:
                run.rec.status = "failed"
                run.phase = "failed"
            else:
                broker.queue.append(run)
            self._kick(broker.subgrid_id)
            return
        target = select(self.policy, run.job, decision.bids, broker.rr)
        requester = run.job.origin_node
        run.phase = "dispatching"
        self._message(self.kernel.now + self._lat(requester, target), "dispatch", requester, target,
                      TIER_SUBGRID, lambda ev, r=run, n=target: self._on_dispatch(r, n),
                      job=run.job.job_id)
        self._count(run, TIER_SUBGRID)
        self._kick(broker.subgrid_id)

    def _on_dispatch(self, run: _JobRun, node: int) -> None:
        if not self.alive[node]:
            self._enqueue(run)
            return
        now = self.kernel.now
        run.node = node
        run.rec.node_id = node
        run.rec.exec_subgrid = self.overlay.subgrid_of[node]
        if run.rec.start_time is None:
            run.rec.start_time = now
        self.assigned[node].add(run.job.job_id)
        origin = run.job.origin_node
        if run.job.byte_demand and node != origin:
            run.phase = "transfer"
            t = now + self.router.transfer_time(run.job.byte_demand, origin, node)
            run.transfer_event = self.kernel.at(
                t, TRANSFER, {"transfer": "input", "job": run.job.job_id, "src": origin, "dst": node},
                lambda ev, r=run: self._on_input_done(r),
            )
        else:
            self._start_compute(run)

    def _on_input_done(self, run: _JobRun) -> None:
        run.transfer_event = None
        run.rec.bytes_moved += run.job.byte_demand
        self.counters["input_bytes"] += run.job.byte_demand
        self._start_compute(run)

    # ------------------------------------------------------ processor sharing
    def _advance(self, node: int) -> None:
        now = self.kernel.now
        jobs = self.computing[node]
        dt = now - self.last_update[node]
        if jobs and dt > 0:
            rate = self.nodes[node].effective_rate / len(jobs)
            step = rate * dt
            for run in jobs.values():
                gained = min(run.demand - run.progress, int(round(step)))
                if gained > 0:
                    run.progress += gained
                    run.rec.executed_flop += gained
        self.last_update[node] = now

    def _reschedule(self, node: int) -> None:
        self.kernel.cancel(self.next_completion[node])
        self.next_completion[node] = None
        jobs = self.computing[node]
        if not jobs:
            return
        rate = self.nodes[node].effective_rate / len(jobs)
        first = min(jobs.values(), key=lambda r: (r.demand - r.progress, r.job.job_id))
        t = self.kernel.now + (first.demand - first.progress) / rate
        self.next_completion[node] = self.kernel.at(
            t, COMPUTE, {"node": node, "job": first.job.job_id},
            lambda ev, n=node, r=first: self._on_compute_done(n, r),
        )

    def _start_compute(self, run: _JobRun) -> None:
        node = run.node
        if run.demand - run.progress <= 0:
            self._finish(run)
            return
        run.phase = "compute"
        run.ckpts_here = 0
        self._advance(node)
        self.computing[node][run.job.job_id] = run
        self._reschedule(node)
        if self.checkpoint is not None:
            pol = self.checkpoint
            if self.history[node].timestamps or pol.I0 is None:
                i0, i1 = seed_intervals(self.history[node], pol.checkpoint_cost, pol)
            else:
                i0, i1 = pol.I0, pol.I1
            run.series = IntervalSeries(pol, i0, i1)
            self._arm_checkpoint(run)

    def _arm_checkpoint(self, run: _JobRun) -> None:
        t = self.kernel.now + run.series.next()
        run.ckpt_event = self.kernel.at(t, CHECKPOINT, {"job": run.job.job_id, "node": run.node},
                                        lambda ev, r=run: self._on_checkpoint(r))

    def _on_checkpoint(self, run: _JobRun) -> None:
        node = run.node
        run.ckpt_event = None
        self._advance(node)
        del self.computing[node][run.job.job_id]
        self._reschedule(node)
        run.phase = "checkpointing"
        run.ckpts_here += 1
        run.rec.checkpoints_taken += 1
        saved = run.progress
        pol = self.checkpoint
        if run.ckpts_here % pol.export_every == 0:
            origin = run.job.origin_node
            t = self.kernel.now + self.router.transfer_time(pol.export_bytes, node, origin)
            ev = self.kernel.at(t, TRANSFER,
                                {"transfer": "export", "job": run.job.job_id, "src": node, "dst": origin,
                                 "progress": saved},
                                lambda e, r=run, p=saved: self._on_export_done(r, p, e))
            run.exports.append(ev)
        run.ckpt_event = self.kernel.after(pol.checkpoint_cost, TIMER,
                                           {"timer": "checkpoint-end", "job": run.job.job_id},
                                           lambda ev, r=run: self._on_checkpoint_end(r))

    def _on_checkpoint_end(self, run: _JobRun) -> None:
        node = run.node
        run.ckpt_event = None
        run.phase = "compute"
        self._advance(node)
        self.computing[node][run.job.job_id] = run
        self._reschedule(node)
        self._arm_checkpoint(run)

    def _on_export_done(self, run: _JobRun, progress: int, ev) -> None:
        if ev in run.exports:
            run.exports.remove(ev)
        self.counters["export_bytes"] += self.checkpoint.export_bytes
        if self.alive[run.job.origin_node]:
            run.restore = max(run.restore, progress)
            run.rec.exports_taken += 1

    def _on_compute_done(self, node: int, run: _JobRun) -> None:
        self.next_completion[node] = None
        self._advance(node)
        gained = run.demand - run.progress
        run.progress = run.demand
        run.rec.executed_flop += gained
        del self.computing[node][run.job.job_id]
        self._reschedule(node)
        self._finish(run)

    def _finish(self, run: _JobRun) -> None:
        self.kernel.cancel(run.ckpt_event)
        run.ckpt_event = None
        if run.node is not None:
            self.assigned[run.node].discard(run.job.job_id)
        run.phase = "done"
        run.rec.status = "completed"
        run.rec.end_time = self.kernel.now

    # -------------------------------------------------------------- failures
    def _on_fail(self, ev) -> None:
        node = ev.payload["node"]
        if not self.alive[node]:
            return
        now = self.kernel.now
        self._advance(node)
        self.alive[node] = False
        self.history[node].record(now)
        self.shares.pop(node, None)
        self.cached_sp[node] = None
        self.kernel.cancel(self.next_completion[node])
        self.next_completion[node] = None
        victims = sorted(self.assigned[node])
        for jid in victims:
            run = self.runs[jid]
            self.kernel.cancel(run.ckpt_event)
            self.kernel.cancel(run.transfer_event)
            for e in run.exports:
                self.kernel.cancel(e)
            run.ckpt_event = run.transfer_event = None
            run.exports = []
            run.phase = "lost"
        self.computing[node] = {}
        self.assigned[node] = set()
        t_detect = self.settings.detection_time(now)
        self.kernel.at(t_detect, TIMER, {"timer": "detect", "node": node, "failed_at": now},
                       lambda e, n=node, f=now, v=victims: self._on_detect(n, f, v))

    def _recover_jobs(self, victims: list[int], failed_node: int) -> None:
        for jid in victims:
            run = self.runs[jid]
            if run.phase != "lost":
                continue
            if self.alive[run.job.origin_node]:
                base = run.restore
            else:
                base = 0
                run.restore = 0
                run.rec.restarts_from_zero += 1
            lost = run.progress - base
            run.rec.redone_flop += lost
            run.progress = base
            run.node = None
            self._enqueue(run)

    def _on_detect(self, node: int, failed_at: float, victims: list[int]) -> None:
        self._recover_jobs(victims, node)
        if self.alive[node]:
            return  # came back before anyone suspected it
        sid = self.overlay.subgrid_of[node]
        region = self.overlay.region_of[sid]
        if self.overlay.region_peer.get(region) == node:
            self._start_region_election(region)
        if self.overlay.super_peer[sid] == node:
            self._start_election(sid)
        else:
            sp = self.overlay.super_peer[sid]
            if sp is not None and self.alive[sp]:
                self.overlay.registries[sid].mark_stale(node)
                self._registry_changed(sid)

    # ------------------------------------------------------------- elections
    def _start_election(self, sid: int) -> None:
        now = self.kernel.now
        old = self.overlay.super_peer[sid]
        self.overlay.super_peer[sid] = None
        region = self.overlay.region_of[sid]
        self.overlay.power[region].pop(sid, None)
        live = [self.nodes[m] for m in self.overlay.members[sid] if self.alive[m]]
        self.epoch += 1
        result = elect_superpeer(live, self.epoch)
        if result.dissolved:
            self.elections.append({"subgrid": sid, "epoch": self.epoch, "leader": None, "time": now})
            return
        self.electing.add(sid)
        settle = now
        for m in result.messages:
            lat = self._lat(m.src, m.dst)
            t = now + (2 * lat if m.kind == "ok" else lat)
            settle = max(settle, t)
            self._message(t, m.kind, m.src, m.dst, TIER_SUBGRID, epoch=self.epoch, subgrid=sid)
        self.kernel.at(settle, TIMER, {"timer": "election-settled", "subgrid": sid, "epoch": self.epoch},
                       lambda ev, s=sid, r=result, o=old: self._on_elected(s, r, o))

    def _on_elected(self, sid: int, result, old_leader: int | None) -> None:
        now = self.kernel.now
        self.electing.discard(sid)
        leader = result.leader
        if not self.alive[leader]:
            self._start_election(sid)
            return
        self.elections.append({"subgrid": sid, "epoch": result.epoch, "leader": leader, "time": now,
                               "messages": len(result.messages)})
        self.overlay.super_peer[sid] = leader
        for m in self.overlay.members[sid]:
            if self.alive[m]:
                self.cached_sp[m] = leader
        reg = self._regenerate(sid, leader)
        reg.owner = leader
        for m in self.overlay.members[sid]:
            if not self.alive[m]:
                reg.mark_stale(m)
        self.overlay.registries[sid] = reg
        region = self.overlay.region_of[sid]
        rp = self.overlay.region_peer[region]
        if rp is None and region not in self.region_electing:
            self._start_region_election(region)
        self._registry_changed(sid)
        for node in self.pending_rediscover[sid]:
            if self.alive[node]:
                self._rediscover_reply(node, leader)
        self.pending_rediscover[sid] = []
        self._kick(sid)

    def _regenerate(self, sid: int, leader: int) -> Registry:
        """Rebuild the registry from shares held by live members."""
        now = self.kernel.now
        held = []
        for m in self.overlay.members[sid]:
            if self.alive[m] and m in self.shares:
                params, share = self.shares[m]
                held.append((m, params, share))
                if m != leader:
                    self._message(now + self._lat(m, leader), "share-return", m, leader, TIER_SUBGRID,
                                  version=share.registry_version, index=share.index)
        record = {"subgrid": sid, "time": now, "leader": leader, "shares": len(held)}
        expected = self.last_mirror.get(sid)
        reg = None
        if held:
            version = majority_version([s for _, _, s in held])
            same = [(p, s) for _, p, s in held if s.registry_version == version]
            params = same[0][0]
            try:
                blob = decode_bytes([s for _, s in same], params)
                reg = Registry.deserialize(blob)
                record.update(version=version, decoded=True,
                              identical=expected is not None and expected == (version, blob))
            except GridSimError as exc:
                record.update(decoded=False, error=type(exc).__name__)
        if reg is None:
            # fall back to re-registration by every live member
            reg = Registry(leader)
            for m in self.overlay.members[sid]:
                if self.alive[m]:
                    reg.upsert(self._describe(m))
                    if m != leader:
                        self._message(now + self._lat(m, leader), "register", m, leader, TIER_SUBGRID)
            record.setdefault("decoded", False)
            record["identical"] = False
        self.regenerations.append(record)
        return reg

    def _start_region_election(self, region: int) -> None:
        now = self.kernel.now
        self.overlay.region_peer[region] = None
        live = []
        for sid in self.overlay.region_members[region]:
            sp = self.overlay.super_peer[sid]
            if sp is not None and self.alive[sp]:
                live.append(self.nodes[sp])
        self.epoch += 1
        result = elect_regionpeer(live, self.epoch)
        if result.dissolved:
            self.elections.append({"region": region, "epoch": self.epoch, "leader": None, "time": now})
            return
        self.region_electing.add(region)
        settle = now
        for m in result.messages:
            lat = self._lat(m.src, m.dst)
            t = now + (2 * lat if m.kind == "ok" else lat)
            settle = max(settle, t)
            self._message(t, m.kind, m.src, m.dst, TIER_REGION, epoch=self.epoch, region=region)
        self.kernel.at(settle, TIMER, {"timer": "region-elected", "region": region, "epoch": self.epoch},
                       lambda ev, r=region, res=result: self._on_region_elected(r, res))

    def _on_region_elected(self, region: int, result) -> None:
        self.region_electing.discard(region)
        if not self.alive[result.leader]:
            self._start_region_election(region)
            return
        self.elections.append({"region": region, "epoch": result.epoch, "leader": result.leader,
                               "time": self.kernel.now})
        self.overlay.region_peer[region] = result.leader
        self.overlay.power[region] = {}
        for sid in self.overlay.region_members[region]:
            sp = self.overlay.super_peer[sid]
            if sp is not None and self.alive[sp]:
                self.overlay.push_power(sid)
        self._replay(self.overlay.drain(), self.kernel.now)

    # ---------------------------------------------------- recovery/rediscovery
    def _on_recover(self, ev) -> None:
        node = ev.payload["node"]
        if self.alive[node]:
            return
        self.alive[node] = True
        self.last_update[node] = self.kernel.now
        self.cached_sp[node] = None
        self._rediscover(node, 0)

    def _rediscover(self, node: int, attempt: int) -> None:
        """One multicast within the sub-grid; the settled super-peer answers."""
        if not self.alive[node]:
            return
        now = self.kernel.now
        sid = self.overlay.subgrid_of[node]
        self._message(now, "discover", node, "*", TIER_SUBGRID, attempt=attempt)
        sp = self.overlay.super_peer[sid]
        if sp is not None and self.alive[sp]:
            self._rediscover_reply(node, sp)
            return
        if sid in self.electing:
            self.pending_rediscover[sid].append(node)
            return
        if attempt < self.settings.rediscover_retries:
            delay = self.settings.rediscover_timeout * (2 ** attempt)
            self.kernel.after(delay, TIMER, {"timer": "rediscover-retry", "node": node, "attempt": attempt + 1},
                              lambda e, n=node, a=attempt + 1: self._rediscover(n, a))
            return
        others = [m for m in self.overlay.members[sid] if m != node and self.alive[m]]
        if others:
            # peers are alive but leaderless and idle: run an election round ourselves
            self._start_election(sid)
            self.pending_rediscover[sid].append(node)
            return
        self._self_elect(node, sid)

    def _rediscover_reply(self, node: int, sp: int) -> None:
        t = self.kernel.now + self._lat(sp, node)
        self._message(t, "discover-reply", sp, node, TIER_SUBGRID,
                      lambda ev, n=node, s=sp: self._on_discover_reply(n, s))

    def _on_discover_reply(self, node: int, sp: int) -> None:
        if not self.alive[node]:
            return
        self.cached_sp[node] = sp
        t = self.kernel.now + self._lat(node, sp)
        self._message(t, "register", node, sp, TIER_SUBGRID,
                      lambda ev, n=node, s=sp: self._on_register(n, s))

    def _on_register(self, node: int, sp: int) -> None:
        sid = self.overlay.subgrid_of[node]
        if not self.alive[node]:
            return
        if self.overlay.super_peer[sid] != sp or not self.alive[sp]:
            self._rediscover(node, 0)
            return
        self.overlay.register_node(sp, self._describe(node), push=False)
        self.overlay.drain()
        self._registry_changed(sid)

    def _self_elect(self, node: int, sid: int) -> None:
        now = self.kernel.now
        self.epoch += 1
        self.elections.append({"subgrid": sid, "epoch": self.epoch, "leader": node, "time": now,
                               "messages": 0, "self": True})
        self.overlay.super_peer[sid] = node
        self.cached_sp[node] = node
        reg = Registry(node)
        reg.upsert(self._describe(node))
        for m in self.overlay.members[sid]:
            if m != node:
                reg.entries.setdefault(m, ResourceDescription(m, self.nodes[m].capability,
                                                              self.nodes[m].owner_share, 0,
                                                              self.nodes[m].storage, now))
                reg.stale.add(m)
        self.overlay.registries[sid] = reg
        region = self.overlay.region_of[sid]
        rp = self.overlay.region_peer[region]
        if (rp is None or not self.alive[rp]) and region not in self.region_electing:
            self._start_region_election(region)
        self._registry_changed(sid)
        self._kick(sid)


def executed_equals_demand_plus_redone(records: Iterable[JobRecord], jobs: dict[int, Job]) -> list[int]:
    """Job ids of completed jobs violating the conservation law."""
    bad = []
    for rec in records:
        if rec.completed and rec.executed_flop != jobs[rec.job_id].flop_demand + rec.redone_flop:
            bad.append(rec.job_id)
    return bad
