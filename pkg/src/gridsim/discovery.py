"""Two-tier super-peer resource discovery.

Queries go member -> super-peer.  A miss is forwarded to the region peer,
which picks a sibling sub-grid by cumulative power; if the region cannot
help, other region peers are contacted one at a time in ascending
region_id order.

The protocol functions resolve synchronously against the overlay state
and append every message they would send (with its tier label) to
``Overlay.messages``.  The simulator replays that list with link latencies.

Wire format (one JSON object per message in the trace log)::

    {"msg": "register|query|forward|dispatch|decline|result|power",
     "src": int, "dst": int, "tier": "subgrid|region|inter-region",
     "query_id": int | null}
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable

from gridsim.broker import ResourceDescription
from gridsim.errors import GridSimError
from gridsim.model import GridTopology, QueryConstraint

TIER_SUBGRID = "subgrid"
TIER_REGION = "region"
TIER_INTER = "inter-region"
TIER_ORDER = {TIER_SUBGRID: 0, TIER_REGION: 1, TIER_INTER: 2}

_query_ids = itertools.count(1)


class SuperPeerUnavailable(GridSimError):
    """The addressed super-peer is down; callers fall back to rediscovery."""


@dataclass
class Registry:
    owner: int
    entries: dict[int, ResourceDescription] = field(default_factory=dict)
    stale: set[int] = field(default_factory=set)
    version: int = 0

    def upsert(self, desc: ResourceDescription) -> None:
        self.entries[desc.node_id] = desc
        self.stale.discard(desc.node_id)
        self.version += 1

    def mark_stale(self, node_id: int) -> None:
        if node_id in self.entries and node_id not in self.stale:
            self.stale.add(node_id)
            self.version += 1

    def live(self) -> list[ResourceDescription]:
        return [d for nid, d in sorted(self.entries.items()) if nid not in self.stale]

    def serialize(self) -> bytes:
        doc = {
            "owner": self.owner,
            "version": self.version,
            "stale": sorted(self.stale),
            "entries": [self.entries[k].to_dict() for k in sorted(self.entries)],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def deserialize(cls, blob: bytes) -> "Registry":
        doc = json.loads(blob)
        entries = {e["node_id"]: ResourceDescription(**e) for e in doc["entries"]}
        return cls(doc["owner"], entries, set(doc["stale"]), doc["version"])

    def __eq__(self, other):
        return isinstance(other, Registry) and self.serialize() == other.serialize()


@dataclass(frozen=True)
class CumulativePower:
    subgrid_id: int
    peak_flops: float
    peak_storage: float
    member_count: int

    def satisfies(self, c: QueryConstraint) -> bool:
        # Both thresholds are checked independently against the peaks.
        return (
            self.member_count >= c.count
            and self.peak_flops >= c.min_capability * c.count
            and self.peak_storage >= c.min_storage * c.count
        )


def aggregate_power(registry: Registry, subgrid_id: int = 0) -> CumulativePower:
    live = registry.live()
    return CumulativePower(
        subgrid_id,
        sum(d.capability * d.owner_share for d in live),
        sum(d.free_storage for d in live),
        len(live),
    )


@dataclass
class QueryMessage:
    constraint: QueryConstraint
    origin_node: int
    query_id: int = field(default_factory=lambda: next(_query_ids))
    hop_record: list[tuple[str, int]] = field(default_factory=list)

    def hop(self, tier: str, peer: int) -> None:
        self.hop_record.append((tier, peer))


@dataclass(frozen=True)
class Message:
    kind: str
    src: int
    dst: int
    tier: str
    query_id: int | None = None

    def to_dict(self) -> dict:
        return {"msg": self.kind, "src": self.src, "dst": self.dst, "tier": self.tier, "query_id": self.query_id}


@dataclass(frozen=True)
class QueryResult:
    found: bool
    subgrid_id: int | None = None
    nodes: tuple[int, ...] = ()
    regions_contacted: tuple[int, ...] = ()


ESCALATE = "escalate-inter-region"


class Overlay:
    """Registries, role assignments and region-peer power caches."""

    def __init__(self, topology: GridTopology, alive: Callable[[int], bool] | None = None):
        self.topology = topology
        self.alive = alive or (lambda node_id: True)
        self.members = {sg.subgrid_id: tuple(sg.members) for sg in topology.subgrids}
        self.super_peer: dict[int, int | None] = {sg.subgrid_id: sg.super_peer for sg in topology.subgrids}
        self.registries = {
            sg.subgrid_id: Registry(sg.super_peer) for sg in topology.subgrids
        }
        self.region_of = {}
        self.region_members: dict[int, tuple[int, ...]] = {}
        self.region_peer: dict[int, int | None] = {}
        for region in topology.regions:
            self.region_members[region.region_id] = tuple(region.subgrids)
            self.region_peer[region.region_id] = region.region_peer
            for sid in region.subgrids:
                self.region_of[sid] = region.region_id
        self.subgrid_of = {n: sg.subgrid_id for sg in topology.subgrids for n in sg.members}
        # region_id -> subgrid_id -> CumulativePower, as last pushed
        self.power: dict[int, dict[int, CumulativePower]] = {r: {} for r in self.region_peer}
        self.seen: dict[int, set[int]] = {r: set() for r in self.region_peer}
        self.messages: list[Message] = []
        self._query_ids = itertools.count(1)

    def new_query(self, constraint: QueryConstraint, origin_node: int) -> QueryMessage:
        """Query ids are unique per overlay, so reruns see identical ids."""
        return QueryMessage(constraint, origin_node, next(self._query_ids))

    # -- plumbing ---------------------------------------------------------
    def send(self, kind: str, src: int, dst: int, tier: str, query_id: int | None = None) -> None:
        self.messages.append(Message(kind, src, dst, tier, query_id))

    def drain(self) -> list[Message]:
        out, self.messages = self.messages, []
        return out

    def subgrid_led_by(self, superpeer: int) -> int:
        for sid, sp in self.super_peer.items():
            if sp == superpeer:
                return sid
        raise KeyError(f"{superpeer} is not a super-peer")

    def push_power(self, subgrid_id: int) -> CumulativePower:
        """Eager refresh of the region peer's cached power for one sub-grid."""
        power = aggregate_power(self.registries[subgrid_id], subgrid_id)
        region = self.region_of[subgrid_id]
        rp = self.region_peer[region]
        sp = self.super_peer[subgrid_id]
        if rp is not None and sp is not None:
            if rp != sp:
                self.send("power", sp, rp, TIER_REGION)
            self.power[region][subgrid_id] = power
        return power

    def bootstrap(self, describe: Callable[[int], ResourceDescription], push: bool = True) -> None:
        """Register every live node with its sub-grid's super-peer."""
        for sid, members in self.members.items():
            sp = self.super_peer[sid]
            for node in members:
                if self.alive(node):
                    self.register_node(sp, describe(node), push=False)
            if push:
                self.push_power(sid)

    # -- protocol ---------------------------------------------------------
    def register_node(self, superpeer: int, desc: ResourceDescription, push: bool = True) -> Registry:
        if superpeer is None or not self.alive(superpeer):
            raise SuperPeerUnavailable(f"super-peer {superpeer} does not answer")
        sid = self.subgrid_led_by(superpeer)
        if desc.node_id not in self.members[sid]:
            raise GridSimError(f"node {desc.node_id} is not a member of sub-grid {sid}")
        if desc.node_id != superpeer:
            self.send("register", desc.node_id, superpeer, TIER_SUBGRID)
        reg = self.registries[sid]
        reg.upsert(desc)
        if push:
            self.push_power(sid)
        return reg

    def local_matches(self, subgrid_id: int, c: QueryConstraint) -> list[int]:
        return [d.node_id for d in self.registries[subgrid_id].live() if c.admits(d.capability, d.free_storage)]

    def query_subgrid(self, superpeer: int, q: QueryMessage) -> QueryResult:
        if superpeer is None or not self.alive(superpeer):
            raise SuperPeerUnavailable(f"super-peer {superpeer} does not answer")
        sid = self.subgrid_led_by(superpeer)
        if q.origin_node != superpeer:
            self.send("query", q.origin_node, superpeer, TIER_SUBGRID, q.query_id)
        q.hop(TIER_SUBGRID, superpeer)
        matches = self.local_matches(sid, q.constraint)
        if len(matches) >= q.constraint.count:
            if q.origin_node != superpeer:
                self.send("result", superpeer, q.origin_node, TIER_SUBGRID, q.query_id)
            return QueryResult(True, sid, tuple(matches))

        region = self.region_of[sid]
        rp = self.region_peer[region]
        if rp is None or not self.alive(rp):
            return self._not_found(superpeer, q, ())
        if rp != superpeer:
            self.send("forward", superpeer, rp, TIER_REGION, q.query_id)
        q.hop(TIER_REGION, rp)
        outcome = self.region_dispatch(rp, q, exclude=(sid,))
        if outcome != ESCALATE:
            return outcome
        return self.inter_region_query(region, q)

    def _not_found(self, src: int, q: QueryMessage, contacted) -> QueryResult:
        if src != q.origin_node:
            self.send("result", src, q.origin_node, TIER_SUBGRID, q.query_id)
        return QueryResult(False, regions_contacted=tuple(contacted))

    def rank_subgrids(self, region_id: int, c: QueryConstraint, exclude: Iterable[int] = ()) -> list[int]:
        """Qualifying sub-grids by descending peak_flops, ties to lower id."""
        skip = set(exclude)
        cands = [
            p for sid, p in self.power[region_id].items()
            if sid not in skip and p.satisfies(c)
        ]
        cands.sort(key=lambda p: (-p.peak_flops, p.subgrid_id))
        return [p.subgrid_id for p in cands]

    def region_dispatch(
        self, regionpeer: int, q: QueryMessage, exclude: Iterable[int] = (), level: str = TIER_REGION
    ):
        """Returns a found ``QueryResult`` or ``ESCALATE``.

        Peak-based qualification can be optimistic; when the chosen
        sub-grid's super-peer finds too few live matches it declines and
        the next candidate is tried.
        """
        region = next(r for r, p in self.region_peer.items() if p == regionpeer)
        self.seen[region].add(q.query_id)
        for sid in self.rank_subgrids(region, q.constraint, exclude):
            sp = self.super_peer[sid]
            if sp is None or not self.alive(sp):
                continue
            if sp != regionpeer:
                self.send("dispatch", regionpeer, sp, TIER_REGION, q.query_id)
                q.hop(level, sp)
            matches = self.local_matches(sid, q.constraint)
            if len(matches) >= q.constraint.count:
                if sp != q.origin_node:
                    self.send("result", sp, q.origin_node, TIER_REGION, q.query_id)
                return QueryResult(True, sid, tuple(matches))
            if sp != regionpeer:
                self.send("decline", sp, regionpeer, TIER_REGION, q.query_id)
        return ESCALATE

    def inter_region_query(self, origin_region: int, q: QueryMessage) -> QueryResult:
        src = self.region_peer[origin_region]
        contacted = [origin_region]
        for region in sorted(self.region_peer):
            if region == origin_region:
                continue
            rp = self.region_peer[region]
            if rp is None or not self.alive(rp):
                continue
            self.send("forward", src, rp, TIER_INTER, q.query_id)
            if q.query_id in self.seen[region]:
                continue  # at-most-once per region
            q.hop(TIER_INTER, rp)
            contacted.append(region)
            outcome = self.region_dispatch(rp, q, level=TIER_INTER)
            if outcome != ESCALATE:
                return QueryResult(outcome.found, outcome.subgrid_id, outcome.nodes, tuple(contacted))
            self.send("decline", rp, src, TIER_INTER, q.query_id)
        return self._not_found(src, q, contacted)

    def redeliver(self, region_id: int, q: QueryMessage):
        """A duplicate delivery of ``q`` to a region peer; ignored if seen."""
        if q.query_id in self.seen[region_id]:
            return None
        return self.region_dispatch(self.region_peer[region_id], q)
